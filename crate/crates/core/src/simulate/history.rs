//! Memory term `conv(t) = ∫₀^∞ g(a) s(t−a) da` and the energy moments
//! `(k∘s)(t) = ∫₀^∞ k(a) ‖s(t) − s(t−a)‖² da` for `k = g, g'`.
//!
//! Between steps the strain is linear in time; both paths integrate that
//! interpolant exactly (Prony) or to Gauss–Legendre accuracy (direct), which
//! makes the discrete energy balance an identity up to the time-trapezoid error
//! in the dissipation term.

use std::collections::VecDeque;
use std::sync::Arc;

use super::{Result, SimError};
use crate::kernel::{KernelSpec, PronySpec};
use crate::num::{from_usize, geometric_grid, lit, Real};
use crate::quad::{gauss_legendre_unit, integrate_to_infinity, Tolerance};

pub type HistoryFn<T> = Arc<dyn Fn(T) -> Vec<T> + Send + Sync>;

/// Shear strain at negative times, `s(x, −σ)` for ages `σ > 0`.
#[derive(Clone)]
pub enum HistoryProfile<T> {
    /// `s(·, −σ) = 0`
    Zero,
    /// `s(·, −σ) = A (1+σ)^{r/2} s(·, 0)`; `r = 0, A = 1` freezes the initial strain
    PowerGrowth { r: T, amplitude: T },
    /// nodal field at age `σ`
    Custom(HistoryFn<T>),
}

impl<T: std::fmt::Debug> std::fmt::Debug for HistoryProfile<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::PowerGrowth { r, amplitude } => write!(f, "PowerGrowth {{ r: {r:?}, amplitude: {amplitude:?} }}"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl<T: Real> HistoryProfile<T> {
    pub fn frozen() -> Self {
        Self::PowerGrowth { r: T::zero(), amplitude: T::one() }
    }

    pub fn power_growth(r: T, amplitude: T) -> Result<Self> {
        if r < T::zero() || !r.is_finite() || !amplitude.is_finite() {
            return Err(SimError::Config(format!("power_growth needs r ≥ 0 and finite amplitude, got r={r}")));
        }
        Ok(Self::PowerGrowth { r, amplitude })
    }

    /// Growth exponent `r` of `‖history(σ)‖²`, when known in closed form.
    pub fn exponent(&self) -> Option<T> {
        match self {
            Self::Zero => Some(T::zero()),
            Self::PowerGrowth { r, .. } => Some(*r),
            Self::Custom(_) => None,
        }
    }

    /// `(m₀, m₁, r)` with `m₀(1+σ)^r ≤ 1 + ‖history(σ)‖² ≤ m₁(1+σ)^r`, given `‖s(·,0)‖²`.
    pub fn growth_bounds(&self, s0_norm_sq: T) -> Option<(T, T, T)> {
        match self {
            Self::Zero => Some((T::one(), T::one(), T::zero())),
            Self::PowerGrowth { r, amplitude } => {
                let c = *amplitude * *amplitude * s0_norm_sq;
                if *r == T::zero() || c == T::zero() {
                    Some((T::one() + c, T::one() + c, T::zero()))
                } else {
                    Some((c.min(T::one()), T::one() + c, *r))
                }
            }
            Self::Custom(_) => None,
        }
    }
}

/// Prehistory as used by the stores: closed form or a fixed quadrature in age.
#[derive(Clone)]
pub(crate) enum Prehistory<T> {
    Zero,
    /// `amp (1+σ)^{r/2} s0`
    Separable { s0: Vec<T>, amp: T, r: T },
    /// `Σ_q w_q δ(σ − σ_q) f_q`
    Sampled { sigma: Vec<T>, weights: Vec<T>, fields: Vec<Vec<T>>, norms: Vec<T> },
}

/// Ages where a custom history is sampled: Gauss–Legendre on geometric panels.
fn age_rule<T: Real>(scale: T) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre_unit::<T>(8);
    let mut edges = vec![T::zero()];
    edges.extend(geometric_grid(scale * lit(1e-4), scale * lit(1e9), 4));
    let mut sigma = Vec::new();
    let mut weights = Vec::new();
    for e in edges.windows(2) {
        let len = e[1] - e[0];
        for (xi, wi) in x.iter().zip(&w) {
            sigma.push(e[0] + len * *xi);
            weights.push(len * *wi);
        }
    }
    (sigma, weights)
}

impl<T: Real> Prehistory<T> {
    pub fn build(profile: &HistoryProfile<T>, s0: &[T], h: &[T], scale: T) -> Result<Self> {
        Ok(match profile {
            HistoryProfile::Zero => Self::Zero,
            HistoryProfile::PowerGrowth { r, amplitude } => {
                Self::Separable { s0: s0.to_vec(), amp: *amplitude, r: *r }
            }
            HistoryProfile::Custom(f) => {
                let (sigma, weights) = age_rule(scale);
                let mut fields = Vec::with_capacity(sigma.len());
                for &s in &sigma {
                    let v = f(s);
                    if v.len() != s0.len() {
                        return Err(SimError::Config(format!(
                            "custom history returned {} values, expected {}",
                            v.len(),
                            s0.len()
                        )));
                    }
                    fields.push(v);
                }
                let norms = fields.iter().map(|v| dot(v, v, h)).collect();
                Self::Sampled { sigma, weights, fields, norms }
            }
        })
    }

    /// `‖history(σ)‖²` for the `h₀` tail.
    pub fn norm_sq(&self, sigma: T, h: &[T]) -> T {
        match self {
            Self::Zero => T::zero(),
            Self::Separable { s0, amp, r } => *amp * *amp * dot(s0, s0, h) * (T::one() + sigma).powf(*r),
            Self::Sampled { sigma: ages, norms, .. } => {
                let i = ages.partition_point(|&a| a < sigma).min(ages.len() - 1);
                norms[i]
            }
        }
    }

    fn separable_moment(k: &KernelSpec<T>, t: T, derivative: bool, power: T) -> Result<T> {
        if power == T::zero() {
            return Ok(if derivative { -k.value(t) } else { k.tail_h(t)? });
        }
        Ok(k.shifted_moment(t, derivative, |s: T| (T::one() + s).powf(power), 1e-12)?)
    }

    /// `out += ∫₀^∞ g(t+σ) history(σ) dσ`.
    pub fn add_conv(&self, k: &KernelSpec<T>, t: T, scale: T, out: &mut [T]) -> Result<()> {
        match self {
            Self::Zero => {}
            Self::Separable { s0, amp, r } => {
                let c = scale * *amp * Self::separable_moment(k, t, false, *r * lit(0.5))?;
                axpy(c, s0, out);
            }
            Self::Sampled { sigma, weights, fields, .. } => {
                for ((&s, &w), f) in sigma.iter().zip(weights).zip(fields) {
                    axpy(scale * w * k.value(t + s), f, out);
                }
            }
        }
        Ok(())
    }

    /// `out += (1/Δt) ∫_{t}^{t+Δt} conv_pre(τ) dτ` by 4-point Gauss–Legendre in `τ`.
    pub fn add_conv_average(&self, k: &KernelSpec<T>, t: T, dt: T, gl: &(Vec<T>, Vec<T>), out: &mut [T]) -> Result<()> {
        if matches!(self, Self::Zero) {
            return Ok(());
        }
        for (x, w) in gl.0.iter().zip(&gl.1) {
            self.add_conv(k, t + dt * *x, *w, out)?;
        }
        Ok(())
    }

    /// `∫₀^∞ k(t+σ) ‖s − history(σ)‖² dσ` with `k = g` or `g'`.
    pub fn energy(&self, k: &KernelSpec<T>, t: T, s: &[T], h: &[T], derivative: bool) -> Result<T> {
        let ss = dot(s, s, h);
        let k0 = Self::separable_moment(k, t, derivative, T::zero())?;
        Ok(match self {
            Self::Zero => ss * k0,
            Self::Separable { s0, amp, r } => {
                let k1 = Self::separable_moment(k, t, derivative, *r * lit(0.5))?;
                let k2 = Self::separable_moment(k, t, derivative, *r)?;
                ss * k0 - lit::<T>(2.0) * *amp * dot(s, s0, h) * k1 + *amp * *amp * dot(s0, s0, h) * k2
            }
            Self::Sampled { sigma, weights, fields, norms } => {
                let mut acc = ss * k0;
                for (((&a, &w), f), &nf) in sigma.iter().zip(weights).zip(fields).zip(norms) {
                    let kv = if derivative { k.derivative(t + a) } else { k.value(t + a) };
                    acc += w * kv * (nf - lit::<T>(2.0) * dot(s, f, h));
                }
                acc
            }
        })
    }
}

fn dot<T: Real>(a: &[T], b: &[T], h: &[T]) -> T {
    a.iter().zip(b).zip(h).map(|((&x, &y), &w)| w * x * y).sum()
}

fn axpy<T: Real>(c: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryMode {
    Direct,
    Prony,
}

/// Memory state for one run.
#[derive(Clone)]
pub struct HistoryStore<T> {
    inner: Store<T>,
    pre: Prehistory<T>,
    h: Vec<T>,
    dt: T,
    step: usize,
    gl4: (Vec<T>, Vec<T>),
}

#[derive(Clone)]
enum Store<T> {
    Direct(Box<Direct<T>>),
    Prony(Prony<T>),
}

impl<T: Real> HistoryStore<T> {
    pub(crate) fn direct(k: &KernelSpec<T>, pre: Prehistory<T>, s0: &[T], h: Vec<T>, dt: T, window: Option<usize>) -> Self {
        let mut snaps = VecDeque::new();
        snaps.push_back(s0.to_vec());
        let inner = Store::Direct(Box::new(Direct {
            kernel: k.clone(),
            s0: s0.to_vec(),
            snaps,
            window,
            w: Weights::new(dt),
        }));
        Self { inner, pre, h, dt, step: 0, gl4: gauss_legendre_unit(4) }
    }

    pub(crate) fn prony(p: &PronySpec<T>, pre: Prehistory<T>, s0: &[T], h: Vec<T>, dt: T) -> Result<Self> {
        let inner = Store::Prony(Prony::new(p, &pre, s0, dt)?);
        Ok(Self { inner, pre, h, dt, step: 0, gl4: gauss_legendre_unit(4) })
    }

    pub fn mode(&self) -> MemoryMode {
        match self.inner {
            Store::Direct(_) => MemoryMode::Direct,
            Store::Prony(_) => MemoryMode::Prony,
        }
    }

    /// Kernel the store actually integrates against.
    pub fn kernel(&self) -> KernelSpec<T> {
        match &self.inner {
            Store::Direct(d) => d.kernel.clone(),
            Store::Prony(p) => KernelSpec::Prony { terms: p.terms.iter().map(|t| (t.a, t.b)).collect() },
        }
    }

    /// `∫₀^∞ g` of [`Self::kernel`].
    pub fn mass(&self) -> Result<T> {
        match &self.inner {
            Store::Direct(d) => Ok(d.kernel.mass()?.mass),
            Store::Prony(p) => Ok(p.terms.iter().map(|t| t.a / t.b).sum()),
        }
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> T {
        from_usize::<T>(self.step) * self.dt
    }

    /// Stored strain snapshots (direct) or `0` (Prony).
    pub fn snapshot_count(&self) -> usize {
        match &self.inner {
            Store::Direct(d) => d.snaps.len(),
            Store::Prony(_) => 0,
        }
    }

    /// `∫₀^∞ g(a) s(t−a) da` at the current time, per node.
    pub fn convolution(&mut self) -> Result<Vec<T>> {
        let t = self.time();
        let mut out = match &mut self.inner {
            Store::Direct(d) => d.conv(self.step),
            Store::Prony(p) => p.conv(),
        };
        if let Store::Direct(d) = &self.inner {
            self.pre.add_conv(&d.kernel, t, T::one(), &mut out)?;
        }
        Ok(out)
    }

    /// Interval average over `[t_n, t_{n+1}]` split as `c̄ s^{n+1} + R̄`.
    pub(crate) fn interval_split(&mut self) -> Result<(T, Vec<T>)> {
        let t = self.time();
        match &mut self.inner {
            Store::Direct(d) => {
                let (c, mut r) = d.conv_average(self.step);
                self.pre.add_conv_average(&d.kernel, t, self.dt, &self.gl4, &mut r)?;
                Ok((c, r))
            }
            Store::Prony(p) => Ok(p.conv_average()),
        }
    }

    /// Appends `s^{n+1}` and moves to the next step.
    pub(crate) fn advance(&mut self, s_next: &[T]) {
        match &mut self.inner {
            Store::Direct(d) => d.push(s_next),
            Store::Prony(p) => p.advance(s_next),
        }
        self.step += 1;
    }

    /// `((g∘s)(t), (g'∘s)(t))` for the current strain `s`.
    pub fn moments(&mut self, s: &[T]) -> Result<(T, T)> {
        let t = self.time();
        match &mut self.inner {
            Store::Direct(d) => {
                let (g, dg) = d.moments(self.step, s, &self.h);
                let pg = self.pre.energy(&d.kernel, t, s, &self.h, false)?;
                let pd = self.pre.energy(&d.kernel, t, s, &self.h, true)?;
                Ok((g + pg, dg + pd))
            }
            Store::Prony(p) => Ok(p.moments(s, &self.h)),
        }
    }
}

/// Product-integration weights for the piecewise-linear strain history.
#[derive(Clone)]
struct Weights<T> {
    dt: T,
    gl: (Vec<T>, Vec<T>),
    /// `Ω_m` at index `m + 1`, `m ≥ −1`: interval-average weights of knot `n − m`
    avg: Vec<T>,
    /// interval-average weights of the half hat at `t = 0`, indexed by `n`
    avg_origin: Vec<T>,
    /// point weights `ω_m`, `m ≥ 0`
    point: Vec<T>,
    point_origin: Vec<T>,
    /// slab moments of `g` against `(1−θ)², 2θ(1−θ), θ²`
    mu: [Vec<T>; 3],
    mu_d: [Vec<T>; 3],
    /// prefix sums of `avg[1..]` and `point`, for ages past the window
    avg_prefix: Vec<T>,
    point_prefix: Vec<T>,
}

impl<T: Real> Weights<T> {
    fn new(dt: T) -> Self {
        Self {
            dt,
            gl: gauss_legendre_unit(8),
            avg: Vec::new(),
            avg_origin: Vec::new(),
            point: Vec::new(),
            point_origin: Vec::new(),
            mu: [Vec::new(), Vec::new(), Vec::new()],
            mu_d: [Vec::new(), Vec::new(), Vec::new()],
            avg_prefix: Vec::new(),
            point_prefix: Vec::new(),
        }
    }

    /// `Δt ∫_lo^{lo+1} k(Δt(m + v)) p(v) dv`.
    fn piece<P: Fn(T) -> T>(&self, k: &KernelSpec<T>, deriv: bool, m: T, lo: T, p: P) -> T {
        let mut acc = T::zero();
        for (x, w) in self.gl.0.iter().zip(&self.gl.1) {
            let v = lo + *x;
            let a = (self.dt * (m + v)).max(T::zero());
            let kv = if deriv { k.derivative(a) } else { k.value(a) };
            acc += *w * kv * p(v);
        }
        acc * self.dt
    }

    /// Grows every table to cover index `m`.
    fn ensure(&mut self, k: &KernelSpec<T>, m: usize) {
        let half = lit::<T>(0.5);
        let (one, two) = (T::one(), lit::<T>(2.0));
        let b_left = move |v: T| (one + v) * (one + v) * half;
        let b_mid = move |v: T| half + v - v * v;
        let b_right = move |v: T| (two - v) * (two - v) * half;
        let b_origin = move |v: T| (one - v * v) * half;
        while self.avg.len() < m + 2 {
            let i = self.avg.len();
            let mm = from_usize::<T>(i) - one;
            let w = match i {
                0 => self.piece(k, false, mm, one, b_right),
                1 => self.piece(k, false, mm, T::zero(), b_mid) + self.piece(k, false, mm, one, b_right),
                _ => {
                    self.piece(k, false, mm, -one, b_left)
                        + self.piece(k, false, mm, T::zero(), b_mid)
                        + self.piece(k, false, mm, one, b_right)
                }
            };
            self.avg.push(w);
            let prev = self.avg_prefix.last().copied().unwrap_or(T::zero());
            self.avg_prefix.push(prev + if i == 0 { T::zero() } else { w });
        }
        while self.avg_origin.len() <= m {
            let n = self.avg_origin.len();
            let nn = from_usize::<T>(n);
            let mut w = self.piece(k, false, nn, T::zero(), b_origin);
            if n > 0 {
                w += self.piece(k, false, nn, -one, b_left);
            }
            self.avg_origin.push(w);
        }
        while self.point.len() <= m {
            let i = self.point.len();
            let mm = from_usize::<T>(i);
            // hat 1 − |v| at age Δt(m + v); the origin knot keeps only v ≤ 0
            let mut w = self.piece(k, false, mm, T::zero(), move |v: T| one - v);
            let left = if i == 0 { T::zero() } else { self.piece(k, false, mm, -one, move |v: T| one + v) };
            w += left;
            let wo = left;
            self.point.push(w);
            self.point_origin.push(wo);
            let prev = self.point_prefix.last().copied().unwrap_or(T::zero());
            self.point_prefix.push(prev + w);
        }
        while self.mu[0].len() <= m {
            let kk = from_usize::<T>(self.mu[0].len());
            let polys: [Box<dyn Fn(T) -> T>; 3] = [
                Box::new(move |t: T| (one - t) * (one - t)),
                Box::new(move |t: T| two * t * (one - t)),
                Box::new(move |t: T| t * t),
            ];
            for (j, p) in polys.iter().enumerate() {
                let a = self.piece(k, false, kk, T::zero(), p);
                let b = self.piece(k, true, kk, T::zero(), p);
                self.mu[j].push(a);
                self.mu_d[j].push(b);
            }
        }
    }
}

#[derive(Clone)]
struct Direct<T> {
    kernel: KernelSpec<T>,
    s0: Vec<T>,
    /// newest last; `snaps[len−1−m] = s^{n−m}`
    snaps: VecDeque<Vec<T>>,
    /// ages beyond `window` steps are frozen at the current strain
    window: Option<usize>,
    w: Weights<T>,
}

impl<T: Real> Direct<T> {
    fn back(&self, m: usize) -> &[T] {
        &self.snaps[self.snaps.len() - 1 - m]
    }

    /// Deepest knot offset still stored, and whether the origin knot is exact.
    fn reach(&self, n: usize) -> (usize, bool) {
        match self.window {
            Some(w) if n > w => (w, false),
            _ => (n, true),
        }
    }

    fn push(&mut self, s: &[T]) {
        self.snaps.push_back(s.to_vec());
        if let Some(w) = self.window {
            while self.snaps.len() > w + 1 {
                self.snaps.pop_front();
            }
        }
    }

    fn conv(&mut self, n: usize) -> Vec<T> {
        self.w.ensure(&self.kernel, n + 1);
        let (reach, exact_origin) = self.reach(n);
        let mut out = vec![T::zero(); self.s0.len()];
        // knots n−m for 0 ≤ m < n, within the window
        let top = if exact_origin { n } else { reach + 1 };
        for m in 0..top.min(n) {
            axpy(self.w.point[m], self.back(m), &mut out);
        }
        if exact_origin {
            axpy(self.w.point_origin[n], &self.s0, &mut out);
        } else {
            let frozen = self.w.point_prefix[n - 1] - self.w.point_prefix[reach] + self.w.point_origin[n];
            axpy(frozen, self.back(0), &mut out);
        }
        out
    }

    fn conv_average(&mut self, n: usize) -> (T, Vec<T>) {
        self.w.ensure(&self.kernel, n + 1);
        let (reach, exact_origin) = self.reach(n);
        let mut out = vec![T::zero(); self.s0.len()];
        let top = if exact_origin { n } else { reach + 1 };
        for m in 0..top.min(n) {
            axpy(self.w.avg[m + 1], self.back(m), &mut out);
        }
        if exact_origin {
            axpy(self.w.avg_origin[n], &self.s0, &mut out);
        } else {
            // avg_prefix[i] = Σ_{m=0}^{i−1} Ω_m
            let frozen = self.w.avg_prefix[n] - self.w.avg_prefix[reach + 1] + self.w.avg_origin[n];
            axpy(frozen, self.back(0), &mut out);
        }
        (self.w.avg[0], out)
    }

    fn moments(&mut self, n: usize, s: &[T], h: &[T]) -> (T, T) {
        self.w.ensure(&self.kernel, n + 1);
        let (reach, _) = self.reach(n);
        let diff = |m: usize| -> Option<Vec<T>> {
            if m == 0 || m > reach {
                return None;
            }
            Some(s.iter().zip(self.back(m)).map(|(&a, &b)| a - b).collect())
        };
        let (mut g, mut dg) = (T::zero(), T::zero());
        let mut d_prev: Option<Vec<T>> = None;
        for k in 0..n.min(reach + 1) {
            let d_next = diff(k + 1);
            let (aa, ab, bb) = match (&d_prev, &d_next) {
                (None, None) => (T::zero(), T::zero(), T::zero()),
                (Some(a), None) => (dot(a, a, h), T::zero(), T::zero()),
                (None, Some(b)) => (T::zero(), T::zero(), dot(b, b, h)),
                (Some(a), Some(b)) => (dot(a, a, h), dot(a, b, h), dot(b, b, h)),
            };
            g += self.w.mu[0][k] * aa + self.w.mu[1][k] * ab + self.w.mu[2][k] * bb;
            dg += self.w.mu_d[0][k] * aa + self.w.mu_d[1][k] * ab + self.w.mu_d[2][k] * bb;
            d_prev = d_next;
        }
        (g, dg)
    }
}

/// `e^{−x}` and `φ_k(x) = ∫₀¹ e^{−x(1−θ)} θ^{k−1}/(k−1)! dθ` for `k = 1, 2, 3`.
pub(crate) fn phi_functions<T: Real>(x: T) -> (T, T, T, T) {
    let e = (-x).exp();
    if x < T::one() {
        // φ_k = Σ_m (−x)^m / (m+k)!
        let mut out = [T::zero(); 3];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut fact = T::one();
            for j in 1..=k + 1 {
                fact = fact * from_usize::<T>(j);
            }
            let mut term = T::one() / fact;
            let mut sum = term;
            for m in 1..40 {
                term = -term * x / from_usize::<T>(m + k + 1);
                sum += term;
                if term.abs() <= T::epsilon() * sum.abs() {
                    break;
                }
            }
            *slot = sum;
        }
        (e, out[0], out[1], out[2])
    } else {
        let p1 = (T::one() - e) / x;
        let p2 = (T::one() - p1) / x;
        let p3 = (lit::<T>(0.5) - p2) / x;
        (e, p1, p2, p3)
    }
}

#[derive(Debug, Clone, Copy)]
struct Term<T> {
    a: T,
    b: T,
    decay: T,
    phi1: T,
    phi2: T,
    phi3: T,
}

/// Per-term accumulators `w_j = ∫ a_j e^{−b_j σ} s(t−σ) dσ` and `z_j` (same with `s²`).
#[derive(Clone)]
struct Prony<T> {
    terms: Vec<Term<T>>,
    w: Vec<Vec<T>>,
    z: Vec<Vec<T>>,
    s: Vec<T>,
    dt: T,
}

impl<T: Real> Prony<T> {
    fn new(p: &PronySpec<T>, pre: &Prehistory<T>, s0: &[T], dt: T) -> Result<Self> {
        if p.is_empty() {
            return Err(SimError::State("Prony store needs at least one term".into()));
        }
        let terms: Vec<Term<T>> = p
            .terms
            .iter()
            .map(|&(a, b)| {
                let (decay, phi1, phi2, phi3) = phi_functions(b * dt);
                Term { a, b, decay, phi1, phi2, phi3 }
            })
            .collect();
        let nodes = s0.len();
        let mut w = vec![vec![T::zero(); nodes]; terms.len()];
        let mut z = vec![vec![T::zero(); nodes]; terms.len()];
        for (j, t) in terms.iter().enumerate() {
            match pre {
                Prehistory::Zero => {}
                Prehistory::Separable { s0: base, amp, r } => {
                    let i1 = exp_moment(t.b, *r * lit(0.5))?;
                    let i2 = exp_moment(t.b, *r)?;
                    for i in 0..nodes {
                        w[j][i] = t.a * *amp * base[i] * i1;
                        z[j][i] = t.a * *amp * *amp * base[i] * base[i] * i2;
                    }
                }
                Prehistory::Sampled { sigma, weights, fields, .. } => {
                    for ((&s, &wq), f) in sigma.iter().zip(weights).zip(fields) {
                        let c = wq * t.a * (-t.b * s).exp();
                        for i in 0..nodes {
                            w[j][i] += c * f[i];
                            z[j][i] += c * f[i] * f[i];
                        }
                    }
                }
            }
        }
        Ok(Self { terms, w, z, s: s0.to_vec(), dt })
    }

    fn conv(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.s.len()];
        for w in &self.w {
            axpy(T::one(), w, &mut out);
        }
        out
    }

    fn conv_average(&self) -> (T, Vec<T>) {
        let mut c = T::zero();
        let mut out = vec![T::zero(); self.s.len()];
        for (t, w) in self.terms.iter().zip(&self.w) {
            let adt = t.a * self.dt;
            c += adt * t.phi3;
            let k = adt * (t.phi2 - t.phi3);
            for ((o, &wi), &si) in out.iter_mut().zip(w).zip(&self.s) {
                *o += t.phi1 * wi + k * si;
            }
        }
        (c, out)
    }

    fn advance(&mut self, s_next: &[T]) {
        let two = lit::<T>(2.0);
        for ((t, w), z) in self.terms.iter().zip(&mut self.w).zip(&mut self.z) {
            let adt = t.a * self.dt;
            for i in 0..s_next.len() {
                let s = self.s[i];
                let d = s_next[i] - s;
                w[i] = t.decay * w[i] + adt * (t.phi1 * s + t.phi2 * d);
                z[i] = t.decay * z[i] + adt * (t.phi1 * s * s + two * t.phi2 * s * d + two * t.phi3 * d * d);
            }
        }
        self.s.copy_from_slice(s_next);
    }

    fn moments(&self, s: &[T], h: &[T]) -> (T, T) {
        let two = lit::<T>(2.0);
        let (mut g, mut dg) = (T::zero(), T::zero());
        for ((t, w), z) in self.terms.iter().zip(&self.w).zip(&self.z) {
            let ab = t.a / t.b;
            let m: T = (0..s.len()).map(|i| h[i] * (ab * s[i] * s[i] - two * s[i] * w[i] + z[i])).sum();
            g += m;
            dg -= t.b * m;
        }
        (g, dg)
    }
}

/// `∫₀^∞ e^{−bσ} (1+σ)^p dσ`.
fn exp_moment<T: Real>(b: T, p: T) -> Result<T> {
    if p == T::zero() {
        return Ok(T::one() / b);
    }
    let f = |s: T| (-b * s).exp() * (T::one() + s).powf(p);
    let split = (T::one() / b).max(T::one()) * lit(10.0);
    integrate_to_infinity(f, T::zero(), split, Tolerance::rel(1e-12))
        .map(|e| e.value)
        .map_err(|e| SimError::Numerical(format!("Prony initialization quadrature: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    #[test]
    fn phi_functions_match_quadrature() {
        for x in [1e-6f64, 0.3, 0.99, 1.0, 2.5, 40.0] {
            let (e, p1, p2, p3) = phi_functions(x);
            assert!((e - (-x).exp()).abs() < 1e-15);
            let q = |k: i32, fact: f64| {
                integrate(|t: f64| (-x * (1.0 - t)).exp() * t.powi(k - 1) / fact, 0.0, 1.0, Tolerance::rel(1e-14))
                    .unwrap()
                    .value
            };
            assert!((p1 - q(1, 1.0)).abs() < 1e-13, "x={x}");
            assert!((p2 - q(2, 1.0)).abs() < 1e-13, "x={x}");
            assert!((p3 - q(3, 2.0)).abs() < 1e-12, "x={x}");
        }
    }

    /// Exact average of `w(t_n + τ)` for linear `s` against the φ-function formula.
    #[test]
    fn prony_interval_average_is_exact() {
        let (a, b, dt) = (0.7f64, 3.0, 0.4);
        let p = PronySpec { terms: vec![(a, b)], horizon: 1.0, fit_error: 0.0 };
        let mut st = Prony::new(&p, &Prehistory::Zero, &[0.5], dt).unwrap();
        st.w[0][0] = 0.2;
        let s1 = 1.3;
        let (c, r) = st.conv_average();
        let got = c * s1 + r[0];
        // w(τ) = e^{−bτ} w0 + a ∫₀^τ e^{−b(τ−σ)} s(σ) dσ, averaged over τ
        let s = |sig: f64| 0.5 + (s1 - 0.5) * sig / dt;
        let w_at = |tau: f64| {
            0.2 * (-b * tau).exp()
                + a * integrate(|sg: f64| (-b * (tau - sg)).exp() * s(sg), 0.0, tau.max(1e-300), Tolerance::rel(1e-13))
                    .unwrap()
                    .value
        };
        let avg = integrate(w_at, 0.0, dt, Tolerance::rel(1e-12)).unwrap().value / dt;
        assert!((got - avg).abs() < 1e-12, "{got} vs {avg}");
        st.advance(&[s1]);
        assert!((st.w[0][0] - w_at(dt)).abs() < 1e-13);
    }

    #[test]
    fn direct_weights_sum_to_cumulative_mass() {
        // constant history: every weight multiplies the same value
        let k = KernelSpec::power_law(1.94f64, 3.0).unwrap();
        let dt = 0.05;
        let mut w = Weights::new(dt);
        let n = 60;
        w.ensure(&k, n + 1);
        let pt: f64 = w.point[..n].iter().sum::<f64>() + w.point_origin[n];
        let t = n as f64 * dt;
        assert!((pt - k.cumulative(t).unwrap()).abs() < 1e-12);
        let av: f64 = w.avg[..=n].iter().sum::<f64>() + w.avg_origin[n];
        // average of ∫₀^τ g over [t, t+Δt]
        let exact = integrate(|tau: f64| k.cumulative(tau).unwrap(), t, t + dt, Tolerance::rel(1e-13)).unwrap().value / dt;
        assert!((av - exact).abs() < 1e-12, "{av} vs {exact}");
    }
}
