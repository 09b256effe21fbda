//! Time stepping of the Timoshenko system with infinite memory.
//!
//! Newmark average acceleration in the displacements, with the memory term
//! averaged exactly over each step: the strain is linear in time between steps,
//! so the interval mean of the convolution is `c̄ s^{n+1} + R̄` and the update is
//! one banded solve against a matrix factored once. The discrete energy then
//! satisfies `E^{n+1} − E^n = (κ/2) ∫ (g'∘s) dτ ≤ 0` exactly (up to quadrature of the
//! kernel), which is what the dissipation residual measures.

mod banded;
mod history;
mod operator;

use std::sync::Arc;

use thiserror::Error;

pub use banded::{BandCholesky, SymBand};
pub use history::{HistoryFn, HistoryProfile, HistoryStore, MemoryMode};

use crate::diagnostics::EnergyBreakdown;
use crate::kernel::{check_a1, fit_prony_with, BeamParams, KernelError, KernelSpec, PronyFitOptions, PronySpec};
use crate::num::{from_usize, lit, Real};
use crate::spatial::{FieldPair, Grid, SpatialError};
use history::Prehistory;
use operator::Operator;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("inadmissible kernel: {0}")]
    Inadmissible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

pub type Result<T> = std::result::Result<T, SimError>;

pub type Profile<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Displacements and velocities at `t = 0` as functions of `x`.
#[derive(Clone)]
pub struct InitialData<T> {
    pub phi: Profile<T>,
    pub psi: Profile<T>,
    pub phi_t: Profile<T>,
    pub psi_t: Profile<T>,
}

impl<T: Real> InitialData<T> {
    pub fn zero() -> Self {
        let z: Profile<T> = Arc::new(|_| T::zero());
        Self { phi: z.clone(), psi: z.clone(), phi_t: z.clone(), psi_t: z }
    }

    /// Given displacements, zero velocities.
    pub fn at_rest<F, G>(phi: F, psi: G) -> Self
    where
        F: Fn(T) -> T + Send + Sync + 'static,
        G: Fn(T) -> T + Send + Sync + 'static,
    {
        Self { phi: Arc::new(phi), psi: Arc::new(psi), ..Self::zero() }
    }

    pub fn with_velocities<F, G>(mut self, phi_t: F, psi_t: G) -> Self
    where
        F: Fn(T) -> T + Send + Sync + 'static,
        G: Fn(T) -> T + Send + Sync + 'static,
    {
        self.phi_t = Arc::new(phi_t);
        self.psi_t = Arc::new(psi_t);
        self
    }
}

impl<T> std::fmt::Debug for InitialData<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("InitialData")
    }
}

#[derive(Debug, Clone)]
pub enum MemoryConfig<T> {
    /// Product integration over the stored history. `window` (time) caps the
    /// stored ages; `None` derives it from `eps`, and `eps = None` uses
    /// `max(1e-8 E(0), 1e-14)`.
    Direct { window: Option<T>, eps: Option<T> },
    /// Exponential-sum recursion; `spec` overrides fitting with `fit`.
    Prony { spec: Option<PronySpec<T>>, fit: PronyFitOptions },
}

impl<T: Real> MemoryConfig<T> {
    pub fn direct() -> Self {
        Self::Direct { window: None, eps: None }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig<T> {
    pub beam: BeamParams<T>,
    pub kernel: KernelSpec<T>,
    /// interior nodes
    pub n: usize,
    pub dt: T,
    pub t_final: T,
    pub history: HistoryProfile<T>,
    pub initial: InitialData<T>,
    pub memory: MemoryConfig<T>,
    pub allow_inadmissible: bool,
}

impl<T: Real> SimConfig<T> {
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round().to_usize().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T> {
    pub fields: FieldPair<T>,
    pub velocities: FieldPair<T>,
    pub t: T,
    pub step_index: usize,
}

/// Diagnostics at one output time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record<T> {
    pub t: T,
    pub step: usize,
    pub energy: EnergyBreakdown<T>,
    /// `(g∘s)(t)`
    pub g_circ: T,
    /// `(g'∘s)(t)`
    pub dg_circ: T,
    /// `‖∫₀^∞ g(a)(s(t) − s(t−a)) da‖²`
    pub jensen_lhs: T,
    /// `max_i |s_i|`
    pub strain_sup: T,
}

/// Output of [`Simulation::run`].
#[derive(Debug, Clone)]
pub struct Series<T> {
    pub dt: T,
    pub every: usize,
    pub kappa: T,
    pub gamma: T,
    /// kernel the memory term actually used
    pub kernel: KernelSpec<T>,
    pub records: Vec<Record<T>>,
}

impl<T: Real> Series<T> {
    pub fn times(&self) -> Vec<T> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn energies(&self) -> Vec<T> {
        self.records.iter().map(|r| r.energy.total()).collect()
    }
}

pub struct Simulation<T> {
    grid: Grid<T>,
    beam: BeamParams<T>,
    dt: T,
    steps: usize,
    op: Operator<T>,
    solver: BandCholesky<T>,
    store: HistoryStore<T>,
    u: Vec<T>,
    v: Vec<T>,
    strain: Vec<T>,
    gamma: T,
    e0: T,
    warnings: Vec<String>,
}

/// `Δt` limit above which the stability hint fires.
pub fn cfl_limit<T: Real>(grid: &Grid<T>, beam: &BeamParams<T>) -> T {
    grid.dx / beam.max_wave_speed()
}

impl<T: Real> Simulation<T> {
    pub fn new(cfg: &SimConfig<T>) -> Result<Self> {
        cfg.beam.validate()?;
        if !(cfg.dt > T::zero()) || !(cfg.t_final >= T::zero()) {
            return Err(SimError::Config(format!("need dt > 0 and T ≥ 0, got dt={}, T={}", cfg.dt, cfg.t_final)));
        }
        let rep = check_a1(&cfg.kernel, &cfg.beam)?;
        if !rep.passes_a1 {
            let why = rep.reason.clone().unwrap_or_default();
            if !cfg.allow_inadmissible {
                return Err(SimError::Inadmissible(why));
            }
            log::warn!("running an inadmissible kernel by override: {why}");
        }
        let grid = Grid::new(cfg.n, cfg.beam.length)?;
        let mut warnings = Vec::new();
        let limit = cfl_limit(&grid, &cfg.beam);
        if cfg.dt > limit {
            let w = format!("dt = {} exceeds the stability hint dx/c_max = {}", cfg.dt, limit);
            log::warn!("{w}");
            warnings.push(w);
        }
        let op = Operator::new(&grid, &cfg.beam);
        let fields = FieldPair::from_fn(&grid, |x| (cfg.initial.phi)(x), |x| (cfg.initial.psi)(x));
        let velocities = FieldPair::from_fn(&grid, |x| (cfg.initial.phi_t)(x), |x| (cfg.initial.psi_t)(x));
        let u = op.pack(&fields);
        let v = op.pack(&velocities);
        let strain = op.strain(&u);
        if let HistoryProfile::Custom(f) = &cfg.history {
            let h0 = f(T::zero());
            let gap = h0.iter().zip(&strain).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
            if h0.len() == strain.len() && gap > lit(1e-8) {
                let w = format!("custom history differs from the initial strain at age 0 by {gap}");
                log::warn!("{w}");
                warnings.push(w);
            }
        }
        let pre = Prehistory::build(&cfg.history, &strain, &op.h, cfg.kernel.characteristic_time())?;
        let mut store = match &cfg.memory {
            MemoryConfig::Direct { window, eps } => {
                let win = match window {
                    Some(w) => Some(w.clone()),
                    None => default_window(cfg, &op, &u, &v, &strain, &pre, *eps)?,
                };
                let steps = win.and_then(|w| (w / cfg.dt).ceil().to_usize());
                HistoryStore::direct(&cfg.kernel, pre, &strain, op.h.clone(), cfg.dt, steps)
            }
            MemoryConfig::Prony { spec, fit } => {
                let p = match spec {
                    Some(p) => p.clone(),
                    None => fit_prony_with(&cfg.kernel, fit)?,
                };
                HistoryStore::prony(&p, pre, &strain, op.h.clone(), cfg.dt)?
            }
        };
        let mass = store.mass()?;
        let gamma = T::one() - mass;
        let (c_bar, _) = store.interval_split()?;
        let shear = cfg.beam.kappa * (T::one() - lit::<T>(2.0) * c_bar);
        let solver = op
            .system(cfg.dt, shear)
            .cholesky()
            .ok_or_else(|| SimError::Numerical("step matrix is not positive definite; reduce dt".into()))?;
        let mut sim = Self {
            grid,
            beam: cfg.beam,
            dt: cfg.dt,
            steps: cfg.steps(),
            op,
            solver,
            store,
            u,
            v,
            strain,
            gamma,
            e0: T::zero(),
            warnings,
        };
        sim.e0 = sim.energy()?.total();
        Ok(sim)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn beam(&self) -> &BeamParams<T> {
        &self.beam
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Steps needed to reach the configured final time.
    pub fn total_steps(&self) -> usize {
        self.steps
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn store(&self) -> &HistoryStore<T> {
        &self.store
    }

    /// Residual stiffness `1 − ∫g` of the kernel in use.
    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn initial_energy(&self) -> T {
        self.e0
    }

    pub fn strain(&self) -> &[T] {
        &self.strain
    }

    pub fn time(&self) -> T {
        self.store.time()
    }

    pub fn state(&self) -> SimState<T> {
        SimState {
            fields: self.op.unpack(&self.u),
            velocities: self.op.unpack(&self.v),
            t: self.time(),
            step_index: self.store.step_index(),
        }
    }

    /// `∫₀^∞ g(a) s(t−a) da` per node at the current time.
    pub fn convolution(&mut self) -> Result<Vec<T>> {
        self.store.convolution()
    }

    pub fn step(&mut self) -> Result<()> {
        let (dt, kappa) = (self.dt, self.beam.kappa);
        let q = dt * dt * lit(0.25);
        let (_, r_bar) = self.store.interval_split()?;
        let mut rhs: Vec<T> = self
            .op
            .mass
            .iter()
            .zip(self.u.iter().zip(&self.v))
            .map(|(&m, (&u, &v))| m * (u + dt * v))
            .collect();
        self.op.add_bending(&self.u, -q, &mut rhs);
        self.op.add_strain_adjoint(&self.strain, -q * kappa, &mut rhs);
        self.op.add_strain_adjoint(&r_bar, lit::<T>(2.0) * q * kappa, &mut rhs);
        self.solver.solve_in_place(&mut rhs);
        let two_over_dt = lit::<T>(2.0) / dt;
        for ((v, &u1), &u0) in self.v.iter_mut().zip(&rhs).zip(&self.u) {
            *v = two_over_dt * (u1 - u0) - *v;
        }
        self.u = rhs;
        if self.u.iter().chain(&self.v).any(|x| !x.is_finite()) {
            return Err(SimError::Numerical(format!("non-finite state at t = {}", self.time())));
        }
        self.strain = self.op.strain(&self.u);
        self.store.advance(&self.strain);
        Ok(())
    }

    /// Energy split at the current time; `diss_residual` is left at zero.
    pub fn energy(&mut self) -> Result<EnergyBreakdown<T>> {
        let (g, _) = self.store.moments(&self.strain)?;
        Ok(self.energy_from(g))
    }

    fn energy_from(&self, g_circ: T) -> EnergyBreakdown<T> {
        let half = lit::<T>(0.5);
        let (mut kin_phi, mut kin_psi) = (T::zero(), T::zero());
        for i in 0..self.op.len() {
            let e = half * self.op.mass[i] * self.v[i] * self.v[i];
            // odd packed slots hold φ
            if i % 2 == 1 && i < self.op.len() - 1 {
                kin_phi += e;
            } else {
                kin_psi += e;
            }
        }
        let ss: T = self.strain.iter().zip(&self.op.h).map(|(&s, &h)| h * s * s).sum();
        EnergyBreakdown {
            e_kin_phi: kin_phi,
            e_kin_psi: kin_psi,
            e_bend: self.op.bending_energy(&self.u),
            e_shear: half * self.beam.kappa * self.gamma * ss,
            e_mem: half * self.beam.kappa * g_circ,
            diss_residual: T::zero(),
        }
    }

    fn record(&mut self) -> Result<Record<T>> {
        let (g, dg) = self.store.moments(&self.strain)?;
        let conv = self.store.convolution()?;
        let mass = T::one() - self.gamma;
        let lhs: T = self
            .strain
            .iter()
            .zip(&conv)
            .zip(&self.op.h)
            .map(|((&s, &c), &h)| {
                let d = mass * s - c;
                h * d * d
            })
            .sum();
        Ok(Record {
            t: self.time(),
            step: self.store.step_index(),
            energy: self.energy_from(g),
            g_circ: g,
            dg_circ: dg,
            jensen_lhs: lhs,
            strain_sup: self.strain.iter().fold(T::zero(), |m, s| m.max(s.abs())),
        })
    }

    /// Steps to the final time, recording every `every` steps (and the last step).
    ///
    /// Each record carries the dissipation residual over the step that ends at it.
    pub fn run(&mut self, every: usize) -> Result<Series<T>> {
        self.run_with(every, |_| {})
    }

    /// As [`Self::run`], calling `sink` with each record as it is produced.
    pub fn run_with<F: FnMut(&Record<T>)>(&mut self, every: usize, mut sink: F) -> Result<Series<T>> {
        let every = every.max(1);
        let mut records = Vec::new();
        let first = self.record()?;
        sink(&first);
        records.push(first);
        let mut prev: Option<Record<T>> = None;
        let half = lit::<T>(0.5);
        for n in 1..=self.steps {
            let want = n % every == 0 || n == self.steps;
            let want_prev = (n + 1) % every == 0 || n + 1 == self.steps;
            self.step()?;
            if want {
                let mut rec = self.record()?;
                let before = match prev.take() {
                    Some(p) if p.step + 1 == n => p,
                    _ => {
                        if n == 1 {
                            records[0]
                        } else {
                            return Err(SimError::State("missing pre-record diagnostics".into()));
                        }
                    }
                };
                let kappa = self.beam.kappa;
                rec.energy.diss_residual = (rec.energy.total() - before.energy.total()) / self.dt
                    - kappa * half * half * (rec.dg_circ + before.dg_circ);
                sink(&rec);
                records.push(rec);
                if want_prev {
                    prev = Some(rec);
                }
            } else if want_prev {
                prev = Some(self.record()?);
            }
        }
        Ok(Series {
            dt: self.dt,
            every,
            kappa: self.beam.kappa,
            gamma: self.gamma,
            kernel: self.store.kernel(),
            records,
        })
    }
}

/// Smallest window `T_h` with `M₀ h₀(T_h) ≤ ε`, `M₀ = max{2, 4E(0)/(κγ)}`; `None` when it
/// exceeds the run.
fn default_window<T: Real>(
    cfg: &SimConfig<T>,
    op: &Operator<T>,
    u: &[T],
    v: &[T],
    strain: &[T],
    pre: &Prehistory<T>,
    eps: Option<T>,
) -> Result<Option<T>> {
    let km = cfg.kernel.mass()?;
    let half = lit::<T>(0.5);
    let kin: T = op.mass.iter().zip(v).map(|(&m, &x)| half * m * x * x).sum();
    let ss: T = strain.iter().zip(&op.h).map(|(&s, &h)| h * s * s).sum();
    let pre_e = pre.energy(&cfg.kernel, T::zero(), strain, &op.h, false)?;
    let e0 = kin + op.bending_energy(u) + half * cfg.beam.kappa * (km.ell * ss + pre_e);
    let eps = eps.unwrap_or_else(|| (lit::<T>(1e-8) * e0).max(lit(1e-14)));
    let m0 = lit::<T>(2.0).max(lit::<T>(4.0) * e0 / (cfg.beam.kappa * km.ell));
    let bound = |t: T| -> Result<T> { Ok(m0 * cfg.kernel.h0(|s| pre.norm_sq(s, &op.h), t)?) };
    if bound(cfg.t_final)? > eps {
        return Ok(None);
    }
    let (mut lo, mut hi) = (T::zero(), cfg.t_final);
    while hi - lo > cfg.dt {
        let mid = (lo + hi) * half;
        if bound(mid)? <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(from_usize::<T>((hi / cfg.dt).ceil().to_usize().unwrap_or(0)) * cfg.dt))
}
