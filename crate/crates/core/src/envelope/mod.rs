//! Convex-analysis envelope `E(t) ≤ C G₅(t) / (χ(t) q(t))` and its ingredients.

mod convex;
mod gfun;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use convex::{make_h_power, ConvexH};
pub use gfun::{closed, GFunctions};

use crate::kernel::{KernelError, KernelSpec};
use crate::num::{geometric_grid, lit, Real};
use crate::quad::{gauss_legendre_unit, integrate, Tolerance};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvelopeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadratic extension is not convex: H''(r) = {0}")]
    ExtensionNotConvex(f64),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("envelope construction failed: {0}")]
    Construction(String),
    #[error("envelope used before the differential inequality was verified")]
    NotCertified,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T> = std::result::Result<T, EnvelopeError>;

type Scalar<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Rate function `ξ` of the kernel inequality `g' ≤ −ξ H(g)`.
#[derive(Clone)]
pub enum Xi<T> {
    Constant(T),
    Custom(Scalar<T>),
}

impl<T: Real> Xi<T> {
    pub fn eval(&self, t: T) -> T {
        match self {
            Self::Constant(v) => *v,
            Self::Custom(f) => f(t),
        }
    }

    /// `∫_0^t ξ`.
    pub fn integral(&self, t: T) -> Result<T> {
        match self {
            Self::Constant(v) => Ok(*v * t),
            Self::Custom(f) => integrate(|s| f(s), T::zero(), t, Tolerance::rel(1e-12))
                .map(|e| e.value)
                .map_err(|e| EnvelopeError::Numerical(e.to_string())),
        }
    }
}

/// Weight `χ` with `0 < χ ≤ 1`, `χ' ≤ 0`.
#[derive(Clone)]
pub enum Chi<T> {
    /// `λ (1+t)^{−p}`
    Power { lambda: T, p: T },
    Custom(Scalar<T>),
}

impl<T: Real> Chi<T> {
    pub fn eval(&self, t: T) -> T {
        match self {
            Self::Power { lambda, p } => *lambda * (T::one() + t).powf(-*p),
            Self::Custom(f) => f(t),
        }
    }
}

impl<T: Real> fmt::Debug for Chi<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Power { lambda, p } => write!(f, "Chi::Power {{ lambda: {lambda}, p: {p} }}"),
            Self::Custom(_) => write!(f, "Chi::Custom"),
        }
    }
}

/// Squared norm of the prescribed shear-strain history, `N(s) = c (1+s)^r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryGrowth<T> {
    pub c: T,
    pub r: T,
}

impl<T: Real> HistoryGrowth<T> {
    pub fn zero() -> Self {
        Self { c: T::zero(), r: T::zero() }
    }

    pub fn norm(&self, s: T) -> T {
        if self.c == T::zero() {
            T::zero()
        } else {
            self.c * (T::one() + s).powf(self.r)
        }
    }
}

/// Exponent `p` of `χ = λ(1+t)^{−p}`: `r+1` when `ν−r ≥ 2`, `ν−1` when `1 < ν−r < 2`.
pub fn chi_exponent<T: Real>(nu: T, r: T) -> Result<T> {
    if !(nu > T::one()) || r < T::zero() {
        return Err(EnvelopeError::InvalidArgument(format!("need ν > 1 and r ≥ 0, got ν={nu}, r={r}")));
    }
    let gap = nu - r;
    if gap >= lit(2.0) {
        Ok(r + T::one())
    } else if gap > T::one() {
        Ok(nu - T::one())
    } else {
        Err(EnvelopeError::InvalidArgument(format!("ν − r = {gap} must exceed 1")))
    }
}

/// Outcome of the sampled differential inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct DifReport<T> {
    pub passes: bool,
    /// `min (RHS − LHS)` over the grid
    pub worst_margin: T,
    pub worst_t: T,
    pub points: usize,
}

/// Everything needed to evaluate `C G₅/(χ q)`.
#[derive(Clone)]
pub struct EnvelopeModel<T> {
    gf: GFunctions<T>,
    /// `ν` when `H = s^{(ν+1)/ν}` so closed forms apply
    power_nu: Option<T>,
    xi: Xi<T>,
    c1: T,
    q0: T,
    kernel: KernelSpec<T>,
    growth: HistoryGrowth<T>,
    /// `(t_k, f(t_k))`
    f_nodes: Vec<(T, T)>,
    gl: (Vec<T>, Vec<T>),
    chi: Option<Chi<T>>,
    certificate: Option<DifReport<T>>,
}

impl<T: Real> fmt::Debug for EnvelopeModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvelopeModel")
            .field("h", self.gf.h())
            .field("c1", &self.c1)
            .field("q0", &self.q0)
            .field("chi", &self.chi)
            .field("certificate", &self.certificate)
            .finish()
    }
}

impl<T: Real> EnvelopeModel<T> {
    /// `f(t) = 1 + ∫_0^t h₀` is tabulated up to `horizon`.
    pub fn new(
        h: ConvexH<T>,
        xi: Xi<T>,
        kernel: KernelSpec<T>,
        growth: HistoryGrowth<T>,
        c1: T,
        q0: T,
        horizon: T,
    ) -> Result<Self> {
        if !(c1 > T::zero()) {
            return Err(EnvelopeError::InvalidArgument(format!("c1 = {c1} must be positive")));
        }
        if !(q0 > T::zero() && q0 < T::one()) {
            return Err(EnvelopeError::InvalidArgument(format!("q0 = {q0} must lie in (0, 1)")));
        }
        if !(horizon > T::zero()) {
            return Err(EnvelopeError::InvalidArgument(format!("horizon {horizon} must be positive")));
        }
        let power_nu = h.power_exponent().map(|p| T::one() / (p - T::one()));
        let gf = GFunctions::new(h)?;
        let mut model = Self {
            gf,
            power_nu,
            xi,
            c1,
            q0,
            kernel,
            growth,
            f_nodes: Vec::new(),
            gl: gauss_legendre_unit(8),
            chi: None,
            certificate: None,
        };
        model.f_nodes = model.tabulate_f(horizon)?;
        Ok(model)
    }

    /// The power-law configuration: `H = s^{(ν+1)/ν}`, `ξ = ν a^{−1/ν}`.
    pub fn power_law(a: T, nu: T, growth: HistoryGrowth<T>, c1: T, q0: T, horizon: T) -> Result<Self> {
        let kernel = KernelSpec::power_law(a, nu)?;
        Self::new(make_h_power(nu)?, Xi::Constant(closed::xi(a, nu)), kernel, growth, c1, q0, horizon)
    }

    pub fn with_chi(mut self, chi: Chi<T>) -> Self {
        self.chi = Some(chi);
        self.certificate = None;
        self
    }

    pub fn chi(&self) -> Option<&Chi<T>> {
        self.chi.as_ref()
    }

    pub fn g_functions(&self) -> &GFunctions<T> {
        &self.gf
    }

    pub fn c1(&self) -> T {
        self.c1
    }

    pub fn q0(&self) -> T {
        self.q0
    }

    pub fn certificate(&self) -> Option<&DifReport<T>> {
        self.certificate.as_ref()
    }

    /// `h₀(t) = ∫_0^∞ g(t+s)(1 + N(s)) ds`.
    pub fn h0(&self, t: T) -> Result<T> {
        if self.growth.r == T::zero() {
            return Ok((T::one() + self.growth.c) * self.kernel.tail_h(t)?);
        }
        let growth = self.growth;
        Ok(self.kernel.h0(|s| growth.norm(s), t)?)
    }

    fn h0_slab(&self, a: T, b: T) -> Result<T> {
        let (x, w) = &self.gl;
        let mut acc = T::zero();
        for (xi, wi) in x.iter().zip(w) {
            acc += *wi * self.h0(a + (b - a) * *xi)?;
        }
        Ok(acc * (b - a))
    }

    fn tabulate_f(&self, horizon: T) -> Result<Vec<(T, T)>> {
        let mut nodes = vec![(T::zero(), T::one())];
        let first = lit::<T>(1e-3).min(horizon);
        let mut grid = vec![first];
        if horizon > first {
            grid = geometric_grid(first, horizon, 64);
        }
        let (mut prev, mut acc) = (T::zero(), T::one());
        for t in grid {
            acc += self.h0_slab(prev, t)?;
            nodes.push((t, acc));
            prev = t;
        }
        Ok(nodes)
    }

    /// `f(t) = 1 + ∫_0^t h₀`.
    pub fn f(&self, t: T) -> Result<T> {
        let i = match self.f_nodes.binary_search_by(|p| p.0.partial_cmp(&t).unwrap()) {
            Ok(i) => return Ok(self.f_nodes[i].1),
            Err(i) => i.saturating_sub(1),
        };
        let (tk, fk) = self.f_nodes[i];
        Ok(fk + self.h0_slab(tk, t)?)
    }

    /// `q(t) = q₀ / f(t)`.
    pub fn q(&self, t: T) -> Result<T> {
        Ok(self.q0 / self.f(t)?)
    }

    /// `G₅(t) = G₁⁻¹(c₁ ∫_0^t ξ)`, closed form when `H` is a power.
    pub fn g5(&self, t: T) -> Result<T> {
        let y = self.c1 * self.xi.integral(t)?;
        match self.power_nu {
            Some(nu) => Ok(closed::g1_inv(nu, y)),
            None => self.gf.g1_inv(y),
        }
    }

    /// `G₅` through numeric quadrature and inversion regardless of the shape of `H`.
    pub fn g5_numeric(&self, t: T) -> Result<T> {
        self.gf.g1_inv(self.c1 * self.xi.integral(t)?)
    }

    fn g2(&self, x: T) -> T {
        match self.power_nu {
            Some(nu) => closed::g2(nu, x),
            None => self.gf.g2(x),
        }
    }

    fn g4(&self, s: T) -> Result<T> {
        match self.power_nu {
            Some(nu) => Ok(closed::g4(nu, s)),
            None => self.gf.g4(s),
        }
    }

    /// `c₂ G₄[(c/d) q h₀] ≤ c₁ (G₂(G₅/χ) − G₂(G₅)/χ)` at every grid time.
    pub fn check_dif(&self, c2: T, c_over_d: T, grid: &[T]) -> Result<DifReport<T>> {
        let chi = self.chi.as_ref().ok_or_else(|| EnvelopeError::Construction("χ not set".into()))?;
        let mut report = DifReport { passes: true, worst_margin: T::infinity(), worst_t: T::zero(), points: 0 };
        for &t in grid {
            let (g5, x, q, h0) = (self.g5(t)?, chi.eval(t), self.q(t)?, self.h0(t)?);
            let lhs = c2 * self.g4(c_over_d * q * h0)?;
            let rhs = self.c1 * (self.g2(g5 / x) - self.g2(g5) / x);
            let margin = rhs - lhs;
            if margin < report.worst_margin {
                report.worst_margin = margin;
                report.worst_t = t;
            }
            if lhs > rhs * (T::one() + lit(1e-12)) {
                report.passes = false;
            }
            report.points += 1;
        }
        Ok(report)
    }

    /// Runs `check_dif` and keeps the result; a failing report still blocks `predicted_envelope`.
    pub fn certify(mut self, c2: T, c_over_d: T, grid: &[T]) -> Result<Self> {
        let report = self.check_dif(c2, c_over_d, grid)?;
        self.certificate = Some(report);
        Ok(self)
    }

    /// Constant making the bound exact at `t = 0`.
    pub fn calibrate(&self, e0: T) -> Result<T> {
        let chi = self.chi.as_ref().ok_or_else(|| EnvelopeError::Construction("χ not set".into()))?;
        Ok(e0 * chi.eval(T::zero()) * self.q(T::zero())? / self.g5(T::zero())?)
    }

    /// `C G₅(t) / (χ(t) q(t))`.
    pub fn predicted_envelope(&self, c: T, t: T) -> Result<T> {
        match &self.certificate {
            Some(cert) if cert.passes => {}
            _ => return Err(EnvelopeError::NotCertified),
        }
        let chi = self.chi.as_ref().ok_or(EnvelopeError::NotCertified)?;
        Ok(c * self.g5(t)? / (chi.eval(t) * self.q(t)?))
    }
}

/// Largest `λ ∈ {1, 1/2, 1/4, …}` for which `χ = λ(1+t)^{−p}` satisfies the inequality;
/// returns the certified model.
pub fn select_chi<T: Real>(
    model: EnvelopeModel<T>,
    nu: T,
    r: T,
    c2: T,
    c_over_d: T,
    grid: &[T],
) -> Result<EnvelopeModel<T>> {
    let p = chi_exponent(nu, r)?;
    let mut lambda = T::one();
    for _ in 0..80 {
        let candidate = model.clone().with_chi(Chi::Power { lambda, p }).certify(c2, c_over_d, grid)?;
        if candidate.certificate().is_some_and(|c| c.passes) {
            return Ok(candidate);
        }
        lambda = lambda * lit(0.5);
    }
    Err(EnvelopeError::Construction(format!("no λ ≥ {lambda} satisfies the inequality with p = {p}")))
}

/// Default sample grid for the inequality: `0` and 200 points per decade on `[1e-3, horizon]`.
pub fn dif_grid<T: Real>(horizon: T) -> Vec<T> {
    let mut g = vec![T::zero()];
    g.extend(geometric_grid(lit(1e-3), horizon.max(lit(1e-2)), 200));
    g
}
