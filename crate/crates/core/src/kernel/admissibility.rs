use serde::{Deserialize, Serialize};

use super::{KernelError, KernelSpec, Result};
use crate::num::{geometric_grid, lit, Real};

/// Physical constants of the beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamParams<T> {
    /// translational density ρ₁
    pub rho1: T,
    /// rotational density ρ₂
    pub rho2: T,
    /// bending stiffness
    pub b: T,
    /// shear stiffness
    pub kappa: T,
    #[serde(rename = "L")]
    pub length: T,
}

impl<T: Real> BeamParams<T> {
    pub fn new(rho1: T, rho2: T, b: T, kappa: T, length: T) -> Result<Self> {
        let p = Self { rho1, rho2, b, kappa, length };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("b", self.b),
            ("kappa", self.kappa),
            ("L", self.length),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(KernelError::Invalid(format!("beam parameter {name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    /// κ/ρ₁, the squared shear wave speed.
    pub fn shear_speed_sq(&self) -> T {
        self.kappa / self.rho1
    }

    /// b/ρ₂, the squared bending wave speed.
    pub fn bending_speed_sq(&self) -> T {
        self.b / self.rho2
    }

    pub fn max_wave_speed(&self) -> T {
        self.shear_speed_sq().max(self.bending_speed_sq()).sqrt()
    }

    /// Threshold `C0 = max{31/32, 64ρ₁L²/(64ρ₁L² + ρ₂)}` the kernel mass must exceed.
    pub fn c0(&self) -> T {
        let q = lit::<T>(64.0) * self.rho1 * self.length * self.length;
        lit::<T>(31.0 / 32.0).max(q / (q + self.rho2))
    }
}

/// Outcome of the admissibility checks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport<T> {
    pub ell: T,
    pub mass: T,
    pub c0: T,
    /// `∫_0^{t0} g`, present when the mass condition holds
    pub g0: Option<T>,
    pub t0: Option<T>,
    pub passes_a1: bool,
    pub passes_a2: Option<bool>,
    pub a2_margin: Option<T>,
    pub reason: Option<String>,
}

impl<T: Real> AdmissibilityReport<T> {
    pub fn passes(&self) -> bool {
        self.passes_a1 && self.passes_a2.unwrap_or(true)
    }

    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let opt = |v: Option<T>| v.map(|x| format!("{x:e}")).unwrap_or_else(|| "none".into());
        let mut out = String::new();
        out.push_str(&format!("mass={:e}\n", self.mass));
        out.push_str(&format!("ell={:e}\n", self.ell));
        out.push_str(&format!("C0={:e}\n", self.c0));
        out.push_str(&format!("g0={}\n", opt(self.g0)));
        out.push_str(&format!("t0={}\n", opt(self.t0)));
        out.push_str(&format!("passes_A1={}\n", self.passes_a1));
        out.push_str(&format!(
            "passes_A2={}\n",
            self.passes_a2.map(|b| b.to_string()).unwrap_or_else(|| "unchecked".into())
        ));
        out.push_str(&format!("A2_margin={}\n", opt(self.a2_margin)));
        if let Some(r) = &self.reason {
            out.push_str(&format!("reason={r}\n"));
        }
        out
    }
}

/// Mass, residual stiffness and activation time checks against the beam's `C0`.
pub fn check_a1<T: Real>(k: &KernelSpec<T>, beam: &BeamParams<T>) -> Result<AdmissibilityReport<T>> {
    let c0 = beam.c0();
    let km = match k.mass() {
        Ok(m) => m,
        Err(KernelError::Inadmissible(msg)) => {
            return Ok(AdmissibilityReport {
                ell: T::neg_infinity(),
                mass: T::infinity(),
                c0,
                g0: None,
                t0: None,
                passes_a1: false,
                passes_a2: None,
                a2_margin: None,
                reason: Some(msg),
            })
        }
        Err(e) => return Err(e),
    };
    let g_zero = k.eval(T::zero())?.0;
    let mut reason = None;
    if !(g_zero > T::zero()) {
        reason = Some("g(0) must be positive".to_string());
    } else if !(km.ell > T::zero()) {
        reason = Some(format!("mass {} ≥ 1 leaves no residual stiffness", km.mass));
    } else if !(km.mass > c0) {
        reason = Some(format!("mass {} ≤ C0 = {}", km.mass, c0));
    }
    let passes = reason.is_none();
    let (t0, g0) = if passes {
        let target = (c0 + lit(1e-6)).min(c0 + (km.mass - c0) * lit(0.5));
        let t0 = activation_time(k, target)?;
        (Some(t0), Some(k.cumulative(t0)?))
    } else {
        (None, None)
    };
    Ok(AdmissibilityReport {
        ell: km.ell,
        mass: km.mass,
        c0,
        g0,
        t0,
        passes_a1: passes,
        passes_a2: None,
        a2_margin: None,
        reason,
    })
}

/// Smallest `t` with `∫_0^t g ≥ target`, by bisection to relative width 1e-10.
fn activation_time<T: Real>(k: &KernelSpec<T>, target: T) -> Result<T> {
    let mut hi = k.characteristic_time();
    let mut guard = 0;
    while k.cumulative(hi)? < target {
        hi = hi * lit(2.0);
        guard += 1;
        if guard > 2000 || !hi.is_finite() {
            return Err(KernelError::Inadmissible("cumulative mass never reaches the target".into()));
        }
    }
    let mut lo = T::zero();
    while hi - lo > lit::<T>(1e-10) * hi {
        let mid = (lo + hi) * lit(0.5);
        if k.cumulative(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Sample grid for the differential-inequality check: `0` plus 200 points per
/// decade from `1e-3` up to `10 t0`.
pub fn a2_grid<T: Real>(t0: T) -> Vec<T> {
    let hi = (t0 * lit(10.0)).max(lit(1.0));
    let mut grid = vec![T::zero()];
    grid.extend(geometric_grid(lit(1e-3), hi, 200));
    grid
}

/// Checks `g'(t) ≤ -ξ(t) H(g(t))` on `grid`; returns `(passes, min(-g' - ξH(g)))`.
pub fn check_a2<T: Real, X: Fn(T) -> T, H: Fn(T) -> T>(
    k: &KernelSpec<T>,
    xi: X,
    h: H,
    grid: &[T],
) -> Result<(bool, T)> {
    let tol = lit::<T>(1e-12);
    let mut passes = true;
    let mut margin = T::infinity();
    let mut prev_xi = T::infinity();
    for &t in grid {
        let x = xi(t);
        if !(x > T::zero()) {
            return Err(KernelError::InvalidArgument(format!("ξ({t}) = {x} must be positive")));
        }
        if x > prev_xi * (T::one() + tol) {
            return Err(KernelError::InvalidArgument(format!("ξ must be non-increasing; it rises at t = {t}")));
        }
        prev_xi = x;
        let (g, dg) = k.eval(t)?;
        let rhs = x * h(g);
        let m = -dg - rhs;
        margin = margin.min(m);
        if dg + rhs > tol * (dg.abs() + rhs.abs()) {
            passes = false;
        }
    }
    Ok((passes, margin))
}

/// Both checks, with the canonical `(ξ, H)` of each family: `H(s) = s^{(ν+1)/ν}`,
/// `ξ = ν a^{−1/ν}` for the power law, and `H(s) = s` with the smallest sampled decay
/// rate `−g'/g` as constant `ξ` otherwise.
pub fn check_admissibility<T: Real>(k: &KernelSpec<T>, beam: &BeamParams<T>) -> Result<AdmissibilityReport<T>> {
    let mut rep = check_a1(k, beam)?;
    let Some(t0) = rep.t0 else { return Ok(rep) };
    let grid = a2_grid(t0);
    let (passes, margin) = match k {
        KernelSpec::PowerLaw { a, nu } => {
            let xi = *nu * a.powf(-T::one() / *nu);
            let p = (*nu + T::one()) / *nu;
            check_a2(k, |_| xi, |s: T| s.powf(p), &grid)?
        }
        _ => {
            let mut xi = T::infinity();
            for &t in &grid {
                let (g, dg) = k.eval(t)?;
                if g > T::zero() {
                    xi = xi.min(-dg / g);
                }
            }
            if !(xi > T::zero()) || !xi.is_finite() {
                rep.passes_a2 = Some(false);
                rep.reason.get_or_insert_with(|| format!("no positive decay rate: min −g'/g = {xi}"));
                return Ok(rep);
            }
            check_a2(k, |_| xi, |s: T| s, &grid)?
        }
    };
    rep.passes_a2 = Some(passes);
    rep.a2_margin = Some(margin);
    if !passes {
        rep.reason.get_or_insert_with(|| format!("g' ≤ −ξH(g) fails with margin {margin:e}"));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_beam(rho2: f64) -> BeamParams<f64> {
        BeamParams::new(1.0, rho2, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn canonical_a2_holds_for_each_family() {
        let beam = BeamParams::new(1.0, 64.0, 1.0, 1.0, 1.0).unwrap();
        for k in [
            KernelSpec::power_law(0.97, 2.0).unwrap(),
            KernelSpec::exponential(0.98, 1.0).unwrap(),
            KernelSpec::prony(vec![(0.49, 1.0), (0.24, 0.5)]).unwrap(),
        ] {
            let rep = check_admissibility(&k, &beam).unwrap();
            assert!(rep.passes(), "{k:?}: {rep:?}");
            assert!(rep.a2_margin.unwrap() > -1e-12);
        }
    }

    #[test]
    fn c0_formula() {
        assert!((unit_beam(1.0).c0() - 64.0 / 65.0).abs() < 1e-15);
        assert_eq!(unit_beam(64.0).c0(), 31.0 / 32.0);
    }

    #[test]
    fn accepts_heavy_power_law() {
        let k = KernelSpec::power_law(0.99, 2.0).unwrap();
        let rep = check_a1(&k, &unit_beam(1.0)).unwrap();
        assert!(rep.passes_a1);
        // a t/(1+t) = C0 + 1e-6  ⇒  t = c/(a - c)
        let c = 64.0 / 65.0 + 1e-6;
        let t0 = c / (0.99 - c);
        assert!((rep.t0.unwrap() - t0).abs() < 1e-8 * t0, "{:?} vs {t0}", rep.t0);
        assert!(rep.g0.unwrap() > rep.c0);
        // t0 is minimal: slightly earlier falls short
        assert!(k.cumulative(rep.t0.unwrap() * (1.0 - 1e-8)).unwrap() < c);
    }

    #[test]
    fn rejects_light_power_law() {
        let k = KernelSpec::power_law(0.97, 2.0).unwrap();
        let rep = check_a1(&k, &unit_beam(1.0)).unwrap();
        assert!(!rep.passes_a1);
        assert!(rep.reason.unwrap().contains("≤ C0"));
    }

    #[test]
    fn heavy_rotational_inertia_lowers_threshold() {
        let k = KernelSpec::power_law(0.97, 2.0).unwrap();
        let rep = check_a1(&k, &unit_beam(64.0)).unwrap();
        assert!(rep.passes_a1);
        assert_eq!(rep.c0, 31.0 / 32.0);
    }

    #[test]
    fn no_residual_stiffness_fails() {
        let k = KernelSpec::exponential(1.0, 1.0).unwrap();
        assert!(!check_a1(&k, &unit_beam(1.0)).unwrap().passes_a1);
    }

    #[test]
    fn a2_power_law_identity() {
        for (a, nu) in [(0.99f64, 2.0f64), (1.94, 3.0), (0.45, 1.5)] {
            let k = KernelSpec::power_law(a, nu).unwrap();
            let xi = nu * a.powf(-1.0 / nu);
            let p = (nu + 1.0) / nu;
            let grid = a2_grid(200.0);
            let (ok, margin) = check_a2(&k, |_| xi, |s: f64| s.powf(p), &grid).unwrap();
            assert!(ok, "ν={nu}: margin {margin}");
            assert!(margin.abs() < 1e-12);
        }
    }

    #[test]
    fn a2_exponential_cases() {
        let k = KernelSpec::exponential(1.0, 1.0).unwrap();
        let grid = a2_grid(10.0);
        assert!(check_a2(&k, |_| 1.0, |s| s, &grid).unwrap().0);
        let (ok, margin) = check_a2(&k, |_| 2.0, |s| s, &grid).unwrap();
        assert!(!ok && margin < 0.0);
        assert!(matches!(
            check_a2(&k, |_| 0.0, |s| s, &grid),
            Err(KernelError::InvalidArgument(_))
        ));
    }
}
