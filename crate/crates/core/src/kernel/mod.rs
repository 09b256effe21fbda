//! Relaxation kernels `g`, their admissibility checks and derived quantities
//! (residual stiffness, tails, `C_α`, the history-weighted tail `h₀`).

mod admissibility;
pub mod nnls;
mod prony;

use thiserror::Error;

use crate::num::{from_usize, lit, Real};
use crate::quad::{self, integrate_to_infinity, QuadError, Tolerance};

pub use admissibility::{a2_grid, check_a1, check_a2, check_admissibility, AdmissibilityReport, BeamParams};
pub use prony::{fit_prony, fit_prony_with, FitWeighting, PronyFitOptions, PronySpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("time {t} outside tabulated range [{lo}, {hi}]")]
    OutOfTable { t: f64, lo: f64, hi: f64 },
    #[error("invalid kernel: {0}")]
    Invalid(String),
    #[error("inadmissible kernel: {0}")]
    Inadmissible(String),
    #[error("inadmissible history: {0}")]
    InadmissibleHistory(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("prony fit failed: best sup error {best_error:e} above tolerance {tol:e} with {terms} terms")]
    FitFailed { best_error: f64, tol: f64, terms: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

pub type Result<T> = std::result::Result<T, KernelError>;

/// A relaxation function sampled on a strictly increasing grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Table<T> {
    t: Vec<T>,
    g: Vec<T>,
    dg: Vec<T>,
    /// exponent of the power-law tail `g(t_end)·(t/t_end)^{-β}` past the table
    tail_exponent: T,
}

impl<T: Real> Table<T> {
    pub fn new(t: Vec<T>, g: Vec<T>) -> Result<Self> {
        if t.len() != g.len() || t.len() < 4 {
            return Err(KernelError::Invalid("table needs at least 4 matching (t, g) rows".into()));
        }
        if t[0] != T::zero() {
            return Err(KernelError::Invalid("table must start at t = 0".into()));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KernelError::Invalid("table times must be strictly increasing".into()));
        }
        if g.windows(2).any(|w| w[1] > w[0]) || g.iter().any(|&v| v < T::zero()) {
            return Err(KernelError::Invalid("tabulated g must be nonnegative and non-increasing".into()));
        }
        let n = t.len();
        // second-order differences on a possibly non-uniform grid
        let mut dg = vec![T::zero(); n];
        for i in 1..n - 1 {
            let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
            dg[i] = (g[i + 1] * h0 * h0 - g[i - 1] * h1 * h1 + g[i] * (h1 * h1 - h0 * h0)) / (h0 * h1 * (h0 + h1));
        }
        dg[0] = (g[1] - g[0]) / (t[1] - t[0]);
        dg[n - 1] = (g[n - 1] - g[n - 2]) / (t[n - 1] - t[n - 2]);
        for d in dg.iter_mut() {
            *d = d.min(T::zero());
        }
        let tail_exponent = fit_last_decade(&t, &g)?;
        Ok(Self { t, g, dg, tail_exponent })
    }

    pub fn times(&self) -> &[T] {
        &self.t
    }

    pub fn values(&self) -> &[T] {
        &self.g
    }

    pub fn tail_exponent(&self) -> T {
        self.tail_exponent
    }

    fn end(&self) -> T {
        *self.t.last().unwrap()
    }

    fn locate(&self, t: T) -> usize {
        match self.t.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(self.t.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.t.len() - 2),
        }
    }

    fn eval(&self, t: T) -> (T, T) {
        let i = self.locate(t);
        let w = (t - self.t[i]) / (self.t[i + 1] - self.t[i]);
        let g = self.g[i] + (self.g[i + 1] - self.g[i]) * w;
        let dg = self.dg[i] + (self.dg[i + 1] - self.dg[i]) * w;
        (g, dg)
    }

    /// Mass beyond the last row under the fitted power-law tail.
    fn tail_mass(&self) -> T {
        let (te, ge) = (self.end(), *self.g.last().unwrap());
        ge * te / (self.tail_exponent - T::one())
    }

    /// `∫_t^{t_end} g` for the piecewise-linear interpolant.
    fn integral_from(&self, t: T) -> T {
        let i = self.locate(t);
        let (g_t, _) = self.eval(t);
        let mut acc = (g_t + self.g[i + 1]) * (self.t[i + 1] - t) * lit(0.5);
        for j in i + 1..self.t.len() - 1 {
            acc += (self.g[j] + self.g[j + 1]) * (self.t[j + 1] - self.t[j]) * lit(0.5);
        }
        acc
    }
}

fn fit_last_decade<T: Real>(t: &[T], g: &[T]) -> Result<T> {
    let end = *t.last().unwrap();
    let pts: Vec<(T, T)> = t
        .iter()
        .zip(g)
        .filter(|(&ti, &gi)| ti >= end * lit(0.1) && ti > T::zero() && gi > T::zero())
        .map(|(&ti, &gi)| (ti.ln(), gi.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(KernelError::Invalid("last decade of the table has fewer than two positive samples".into()));
    }
    let n = from_usize::<T>(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= T::zero() {
        return Err(KernelError::Invalid("degenerate last decade".into()));
    }
    let beta = -(sxy / sxx);
    if beta <= T::one() {
        return Err(KernelError::Inadmissible(format!(
            "tail exponent {beta} of the last table decade gives infinite mass"
        )));
    }
    Ok(beta)
}

/// Relaxation function `g`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec<T> {
    /// `g(t) = a (1+t)^{-ν}`
    PowerLaw { a: T, nu: T },
    /// `g(t) = a e^{-λt}`
    Exponential { a: T, lambda: T },
    /// `g(t) = Σ a_j e^{-b_j t}` stored as `(a_j, b_j)` pairs
    Prony { terms: Vec<(T, T)> },
    Tabulated(Table<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMass<T> {
    pub mass: T,
    pub ell: T,
}

impl<T: Real> KernelSpec<T> {
    pub fn power_law(a: T, nu: T) -> Result<Self> {
        if !(a > T::zero()) {
            return Err(KernelError::Invalid("power-law amplitude must be positive".into()));
        }
        if !(nu > T::zero()) {
            return Err(KernelError::Invalid("power-law exponent must be positive".into()));
        }
        Ok(Self::PowerLaw { a, nu })
    }

    pub fn exponential(a: T, lambda: T) -> Result<Self> {
        if !(a > T::zero()) || !(lambda > T::zero()) {
            return Err(KernelError::Invalid("exponential kernel needs a > 0 and λ > 0".into()));
        }
        Ok(Self::Exponential { a, lambda })
    }

    pub fn prony(terms: Vec<(T, T)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(KernelError::Invalid("prony kernel needs at least one term".into()));
        }
        if terms.iter().any(|&(a, b)| a < T::zero() || !(b > T::zero())) {
            return Err(KernelError::Invalid("prony terms need a_j ≥ 0 and b_j > 0".into()));
        }
        if !(terms.iter().map(|t| t.0).sum::<T>() > T::zero()) {
            return Err(KernelError::Invalid("prony kernel has g(0) = 0".into()));
        }
        Ok(Self::Prony { terms })
    }

    pub fn tabulated(t: Vec<T>, g: Vec<T>) -> Result<Self> {
        let table = Table::new(t, g)?;
        if !(table.g[0] > T::zero()) {
            return Err(KernelError::Invalid("tabulated kernel has g(0) = 0".into()));
        }
        Ok(Self::Tabulated(table))
    }

    /// Time scale used to split improper integrals.
    pub fn characteristic_time(&self) -> T {
        match self {
            Self::PowerLaw { .. } => T::one(),
            Self::Exponential { lambda, .. } => T::one() / *lambda,
            Self::Prony { terms } => {
                T::one() / terms.iter().map(|t| t.1).fold(T::infinity(), |m, b| m.min(b))
            }
            Self::Tabulated(tab) => tab.end() * lit(0.1),
        }
    }

    /// `(g(t), g'(t))`.
    pub fn eval(&self, t: T) -> Result<(T, T)> {
        if t < T::zero() {
            return Err(KernelError::NegativeTime(t.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(match self {
            Self::PowerLaw { a, nu } => {
                let base = T::one() + t;
                let g = *a * base.powf(-*nu);
                (g, -*nu * g / base)
            }
            Self::Exponential { a, lambda } => {
                let g = *a * (-*lambda * t).exp();
                (g, -*lambda * g)
            }
            Self::Prony { terms } => terms.iter().fold((T::zero(), T::zero()), |(g, d), &(a, b)| {
                let e = a * (-b * t).exp();
                (g + e, d - b * e)
            }),
            Self::Tabulated(tab) => {
                if t > tab.end() {
                    return Err(KernelError::OutOfTable {
                        t: t.to_f64().unwrap_or(f64::NAN),
                        lo: 0.0,
                        hi: tab.end().to_f64().unwrap_or(f64::NAN),
                    });
                }
                tab.eval(t)
            }
        })
    }

    /// `g(t)` for any `t ≥ 0`; tabulated kernels continue with their tail model.
    pub fn value(&self, t: T) -> T {
        match self {
            Self::Tabulated(tab) if t > tab.end() => {
                *tab.g.last().unwrap() * (t / tab.end()).powf(-tab.tail_exponent)
            }
            _ => self.eval(t.max(T::zero())).map(|p| p.0).unwrap_or_else(|_| T::nan()),
        }
    }

    /// `g'(t)` for any `t ≥ 0`, tail model included.
    pub fn derivative(&self, t: T) -> T {
        match self {
            Self::Tabulated(tab) if t > tab.end() => -tab.tail_exponent * self.value(t) / t,
            _ => self.eval(t.max(T::zero())).map(|p| p.1).unwrap_or_else(|_| T::nan()),
        }
    }

    pub fn mass(&self) -> Result<KernelMass<T>> {
        let mass = match self {
            Self::PowerLaw { a, nu } => {
                if *nu <= T::one() {
                    return Err(KernelError::Inadmissible(format!("∫g diverges for ν = {nu} ≤ 1")));
                }
                *a / (*nu - T::one())
            }
            Self::Exponential { a, lambda } => *a / *lambda,
            Self::Prony { terms } => terms.iter().map(|&(a, b)| a / b).sum(),
            Self::Tabulated(tab) => tab.integral_from(T::zero()) + tab.tail_mass(),
        };
        Ok(KernelMass { mass, ell: T::one() - mass })
    }

    /// `h(t) = ∫_t^∞ g(s) ds`.
    pub fn tail_h(&self, t: T) -> Result<T> {
        if t < T::zero() {
            return Err(KernelError::NegativeTime(t.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(match self {
            Self::PowerLaw { a, nu } => {
                if *nu <= T::one() {
                    return Err(KernelError::Inadmissible(format!("∫g diverges for ν = {nu} ≤ 1")));
                }
                *a / (*nu - T::one()) * (T::one() + t).powf(T::one() - *nu)
            }
            Self::Exponential { a, lambda } => *a / *lambda * (-*lambda * t).exp(),
            Self::Prony { terms } => terms.iter().map(|&(a, b)| a / b * (-b * t).exp()).sum(),
            Self::Tabulated(tab) => {
                if t >= tab.end() {
                    let ge = *tab.g.last().unwrap();
                    let te = tab.end();
                    ge * te / (tab.tail_exponent - T::one()) * (t / te).powf(T::one() - tab.tail_exponent)
                } else {
                    tab.integral_from(t) + tab.tail_mass()
                }
            }
        })
    }

    /// `∫_0^t g(s) ds`.
    pub fn cumulative(&self, t: T) -> Result<T> {
        Ok(self.mass()?.mass - self.tail_h(t)?)
    }

    /// `1 - ∫_0^t g(s) ds`, the remainder that fixes the activation time t₀.
    pub fn h_rem(&self, t: T) -> Result<T> {
        Ok(T::one() - self.cumulative(t)?)
    }

    /// `C_α = ∫_0^∞ g² / (αg - g') ds`.
    pub fn c_alpha(&self, alpha: T) -> Result<T> {
        if !(alpha > T::zero()) {
            return Err(KernelError::InvalidArgument(format!("α = {alpha} must be positive")));
        }
        // closed forms where g' is proportional to g
        match self {
            Self::Exponential { a, lambda } => return Ok(*a / *lambda / (alpha + *lambda)),
            Self::PowerLaw { nu, .. } if *nu <= T::one() => {
                return Err(KernelError::Inadmissible(format!("∫g diverges for ν = {nu} ≤ 1")))
            }
            _ => {}
        }
        let integrand = |s: T| {
            let g = self.value(s);
            let denom = alpha * g - self.derivative(s);
            if g <= T::zero() || denom <= T::zero() {
                T::zero()
            } else {
                g * g / denom
            }
        };
        let split = self.split_point(alpha);
        Ok(integrate_to_infinity(integrand, T::zero(), split, Tolerance::rel(1e-10))?.value)
    }

    fn split_point(&self, alpha: T) -> T {
        let base = self.characteristic_time() * lit(10.0);
        match self {
            // g/(α + ν/(1+s)) changes character near s ≈ ν/α
            Self::PowerLaw { nu, .. } => base.max(*nu / alpha),
            _ => base,
        }
    }

    /// `h₀(t) = ∫_0^∞ g(t+s) (1 + N(s)) ds` with `N(s) = ‖history shear strain at age s‖²`.
    pub fn h0<F: Fn(T) -> T>(&self, history_norm: F, t: T) -> Result<T> {
        if t < T::zero() {
            return Err(KernelError::NegativeTime(t.to_f64().unwrap_or(f64::NAN)));
        }
        let integrand = |s: T| self.value(t + s) * (T::one() + history_norm(s));
        // integrand must decay faster than 1/s for a finite value
        let probe = |s: T| s * integrand(s);
        let far = [lit(1e6), lit(1e8), lit(1e10)];
        let vals: Vec<T> = far.iter().map(|&s| probe(s)).collect();
        if vals.iter().any(|v| !v.is_finite()) || (vals[2] >= vals[1] && vals[1] >= vals[0] && vals[0] > T::zero()) {
            return Err(KernelError::InadmissibleHistory(
                "history growth too fast: ∫ g(t+s)(1+‖history‖²) ds diverges".into(),
            ));
        }
        let split = self.characteristic_time() * lit(10.0);
        integrate_to_infinity(integrand, T::zero(), split, Tolerance::rel(1e-10))
            .map(|e| e.value)
            .map_err(|e| KernelError::InadmissibleHistory(format!("h0 quadrature failed: {e}")))
    }

    /// `∫_0^∞ k(t + σ) w(σ) dσ` with `k = g` or `k = g'`.
    pub fn shifted_moment<F: Fn(T) -> T>(&self, t: T, derivative: bool, weight: F, tol: f64) -> Result<T> {
        let integrand = |s: T| {
            let k = if derivative { self.derivative(t + s) } else { self.value(t + s) };
            k * weight(s)
        };
        let split = self.characteristic_time() * lit(10.0);
        Ok(integrate_to_infinity(integrand, T::zero(), split, Tolerance::rel(tol))?.value)
    }

    /// `∫_a^b g(s) ds` (or `g'`) by adaptive quadrature; used for product weights.
    pub fn integrate_between<F: Fn(T) -> T>(&self, a: T, b: T, derivative: bool, weight: F) -> Result<T> {
        let f = |s: T| {
            let k = if derivative { self.derivative(s) } else { self.value(s) };
            k * weight(s)
        };
        Ok(quad::integrate(f, a, b, Tolerance::rel(1e-12))?.value)
    }

    pub fn is_power_law(&self) -> Option<(T, T)> {
        match self {
            Self::PowerLaw { a, nu } => Some((*a, *nu)),
            _ => None,
        }
    }
}

impl<T: Real> PronySpec<T> {
    /// The exponential sum as a kernel in its own right.
    pub fn as_kernel(&self) -> KernelSpec<T> {
        KernelSpec::Prony { terms: self.terms.clone() }
    }
}
