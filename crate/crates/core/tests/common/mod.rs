//! Property checks shared by the proptest suite and the acceptance run.
#![allow(dead_code)]

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use viscobeam::envelope::{make_h_power, ConvexH, GFunctions};
use viscobeam::kernel::{BeamParams, KernelSpec, PronyFitOptions};
use viscobeam::simulate::{HistoryProfile, InitialData, MemoryConfig, SimConfig, Simulation};
use viscobeam::spatial::{assemble_rhs, d_x, d_xx_neumann, inner, shear_strain, FieldPair, Grid};

pub type Check = Result<(), TestCaseError>;

pub fn grid_and_pair() -> impl Strategy<Value = (usize, f64, Vec<f64>, Vec<f64>)> {
    (4usize..64, 0.1f64..10.0)
        .prop_flat_map(|(n, l)| (Just(n), Just(l), vec(-1.0f64..1.0, n + 2), vec(-1.0f64..1.0, n + 2)))
}

/// `⟨Du, v⟩ + ⟨u, Dv⟩ = u_{N+1} v_{N+1} − u_0 v_0` under trapezoidal weights.
pub fn summation_by_parts((n, l, u, v): (usize, f64, Vec<f64>, Vec<f64>)) -> Check {
    let g = Grid::new(n, l).unwrap();
    let lhs = inner(&d_x(&u, &g), &v, &g) + inner(&u, &d_x(&v, &g), &g);
    let rhs = u[n + 1] * v[n + 1] - u[0] * v[0];
    prop_assert!((lhs - rhs).abs() <= 1e-12 * n as f64, "{lhs} vs {rhs}");
    Ok(())
}

/// A present-equal memory leaves no shear: `φ_tt ≡ 0`, `ψ_tt = (b/ρ₂) ψ_xx`.
pub fn frozen_history_cancels_shear(
    ((n, l, phi, psi), (rho1, rho2, b, kappa)): ((usize, f64, Vec<f64>, Vec<f64>), (f64, f64, f64, f64)),
) -> Check {
    let g = Grid::new(n, l).unwrap();
    let beam = BeamParams::new(rho1, rho2, b, kappa, l).unwrap();
    let mut f = FieldPair { phi, psi };
    f.phi[0] = 0.0;
    f.phi[n + 1] = 0.0;
    let conv = shear_strain(&f, &g);
    let (acc_phi, acc_psi) = assemble_rhs(&f, &conv, &beam, &g).unwrap();
    prop_assert!(acc_phi.iter().all(|&a| a == 0.0));
    let lap = d_xx_neumann(&f.psi, &g);
    for (a, l) in acc_psi.iter().zip(&lap) {
        prop_assert!((a - b / rho2 * l).abs() <= 1e-12 * (1.0 + (b / rho2 * l).abs()));
    }
    Ok(())
}

pub fn beam_params() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.1f64..10.0, 0.1f64..100.0, 0.1f64..100.0, 0.1f64..10.0)
}

/// `H(θz) ≤ θ H(z)` for `θ ∈ [0,1]`, `z ∈ (0, r]`.
pub fn sub_homogeneity((nu, theta, z): (f64, f64, f64)) -> Check {
    let h = make_h_power(nu).unwrap();
    let z = z * h.r();
    prop_assert!(h.eval(theta * z) <= theta * h.eval(z) * (1.0 + 1e-14));
    let ext = h.extend().unwrap();
    prop_assert!(ext.eval(theta * z) <= theta * ext.eval(z) * (1.0 + 1e-14));
    Ok(())
}

/// `AB ≤ H*(A) + H(B)` with `H*(s) = s (H')⁻¹(s) − H((H')⁻¹(s))`.
pub fn young((nu, a_frac, b_frac): (f64, f64, f64)) -> Check {
    let h = make_h_power(nu).unwrap();
    let a = a_frac * h.deriv(h.r());
    let b = b_frac * h.r();
    let rhs = h.conjugate(a).unwrap() + h.eval(b);
    prop_assert!(a * b <= rhs + 1e-13 * (a * b).max(rhs), "{} > {rhs}", a * b);
    // equality at B = (H')⁻¹(A)
    let b_star = h.deriv_inverse(a).unwrap();
    let gap = h.conjugate(a).unwrap() + h.eval(b_star) - a * b_star;
    prop_assert!(gap.abs() <= 1e-12 * (a * b_star).max(1e-300));
    Ok(())
}

/// `G₁(G₁⁻¹(y)) = y` through the generic quadrature path, for a power `H` and a
/// non-power one.
pub fn g1_round_trip((nu, y): (f64, f64)) -> Check {
    let power = GFunctions::new(make_h_power(nu).unwrap()).unwrap();
    let mixed = ConvexH::custom(move |s: f64| 0.5 * s * s + s.powf(nu), move |s: f64| s + nu * s.powf(nu - 1.0), 1.0)
        .unwrap();
    for g in [power, GFunctions::new(mixed).unwrap()] {
        let t = g.g1_inv(y).unwrap();
        prop_assert!(t > 0.0 && t <= 1.0);
        let back = g.g1(t).unwrap();
        prop_assert!((back - y).abs() <= 1e-8 * y.max(1e-12), "G1(G1inv({y})) = {back}");
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ZeroCase {
    pub n: usize,
    pub dt: f64,
    pub kernel: usize,
    pub prony: bool,
}

pub fn zero_case() -> impl Strategy<Value = ZeroCase> {
    (4usize..24, 0.001f64..0.05, 0usize..3, any::<bool>()).prop_map(|(n, dt, kernel, prony)| ZeroCase {
        n,
        dt,
        kernel,
        prony,
    })
}

/// Zero data and zero history give exactly zero at every step.
pub fn zero_in_zero_out(c: ZeroCase) -> Check {
    let kernel = match c.kernel {
        0 => KernelSpec::power_law(1.94, 3.0),
        1 => KernelSpec::exponential(0.98, 1.0),
        _ => KernelSpec::prony(vec![(0.49, 1.0), (0.24, 0.5)]),
    }
    .unwrap();
    let memory = if c.prony {
        MemoryConfig::Prony { spec: None, fit: PronyFitOptions::new(4, 10.0, 0.05) }
    } else {
        MemoryConfig::direct()
    };
    let cfg = SimConfig {
        beam: BeamParams::new(1.0, 64.0, 64.0, 1.0, 1.0).unwrap(),
        kernel,
        n: c.n,
        dt: c.dt,
        t_final: 20.0 * c.dt,
        history: HistoryProfile::Zero,
        initial: InitialData::zero(),
        memory,
        allow_inadmissible: true,
    };
    let mut sim = Simulation::new(&cfg).unwrap();
    let s = sim.run(1).unwrap();
    prop_assert!(s.records.iter().all(|r| r.energy.total() == 0.0 && r.energy.diss_residual == 0.0));
    let st = sim.state();
    prop_assert!(st.fields.phi.iter().chain(&st.fields.psi).chain(&st.velocities.phi).all(|&v| v == 0.0));
    Ok(())
}
