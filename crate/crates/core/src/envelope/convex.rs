use std::fmt;
use std::sync::Arc;

use super::{EnvelopeError, Result};
use crate::num::{lit, Real};

type Scalar<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone)]
enum Shape<T> {
    /// `H(s) = s^p`
    Power { p: T },
    Custom { h: Scalar<T>, dh: Scalar<T>, d2h: Option<Scalar<T>> },
}

/// Quadratic continuation beyond `r`: `H(r) = a`, `H'(r) = b`, `H''(r) = c`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Quadratic<T> {
    a: T,
    b: T,
    c: T,
}

/// Convex function `H` with `H(0) = H'(0) = 0`, strictly convex on `(0, r]`.
#[derive(Clone)]
pub struct ConvexH<T> {
    shape: Shape<T>,
    r: T,
    extension: Option<Quadratic<T>>,
}

impl<T: fmt::Debug> fmt::Debug for ConvexH<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("ConvexH");
        match &self.shape {
            Shape::Power { p } => d.field("power", p),
            Shape::Custom { .. } => d.field("custom", &true),
        };
        d.field("r", &self.r).field("extended", &self.extension.is_some()).finish()
    }
}

/// `H(s) = s^{(ν+1)/ν}` on `(0, 1]`.
pub fn make_h_power<T: Real>(nu: T) -> Result<ConvexH<T>> {
    if !(nu > T::one()) || !nu.is_finite() {
        return Err(EnvelopeError::InvalidArgument(format!("ν = {nu} must exceed 1")));
    }
    ConvexH::power((nu + T::one()) / nu)
}

impl<T: Real> ConvexH<T> {
    /// `H(s) = s^p` with `p > 1` and `r = 1`.
    pub fn power(p: T) -> Result<Self> {
        if !(p > T::one()) || !p.is_finite() {
            return Err(EnvelopeError::InvalidArgument(format!("power {p} must exceed 1")));
        }
        Ok(Self { shape: Shape::Power { p }, r: T::one(), extension: None })
    }

    /// User-supplied `H` and `H'` on `(0, r]`; `H''` falls back to a centered difference of `H'`.
    pub fn custom<H, D>(h: H, dh: D, r: T) -> Result<Self>
    where
        H: Fn(T) -> T + Send + Sync + 'static,
        D: Fn(T) -> T + Send + Sync + 'static,
    {
        let out = Self {
            shape: Shape::Custom { h: Arc::new(h), dh: Arc::new(dh), d2h: None },
            r,
            extension: None,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn with_second_derivative<D2>(mut self, d2h: D2) -> Self
    where
        D2: Fn(T) -> T + Send + Sync + 'static,
    {
        if let Shape::Custom { d2h: slot, .. } = &mut self.shape {
            *slot = Some(Arc::new(d2h));
        }
        self
    }

    pub fn r(&self) -> T {
        self.r
    }

    pub fn is_extended(&self) -> bool {
        self.extension.is_some()
    }

    /// Exponent `p` when `H` is an unextended power.
    pub fn power_exponent(&self) -> Option<T> {
        match (&self.shape, self.extension) {
            (Shape::Power { p }, None) => Some(*p),
            _ => None,
        }
    }

    fn raw(&self, s: T) -> T {
        match &self.shape {
            Shape::Power { p } => s.powf(*p),
            Shape::Custom { h, .. } => h(s),
        }
    }

    fn raw_d(&self, s: T) -> T {
        match &self.shape {
            Shape::Power { p } => *p * s.powf(*p - T::one()),
            Shape::Custom { dh, .. } => dh(s),
        }
    }

    fn raw_d2(&self, s: T) -> T {
        match &self.shape {
            Shape::Power { p } => *p * (*p - T::one()) * s.powf(*p - lit(2.0)),
            Shape::Custom { dh, d2h, .. } => match d2h {
                Some(f) => f(s),
                None => {
                    let e = s * lit(1e-5);
                    (dh(s + e) - dh(s - e)) / (e + e)
                }
            },
        }
    }

    pub fn eval(&self, s: T) -> T {
        match self.extension {
            Some(q) if s > self.r => {
                let d = s - self.r;
                q.a + q.b * d + q.c * lit::<T>(0.5) * d * d
            }
            _ => self.raw(s),
        }
    }

    pub fn deriv(&self, s: T) -> T {
        match self.extension {
            Some(q) if s > self.r => q.b + q.c * (s - self.r),
            _ => self.raw_d(s),
        }
    }

    pub fn second(&self, s: T) -> T {
        match self.extension {
            Some(q) if s > self.r => q.c,
            _ => self.raw_d2(s),
        }
    }

    /// `H̄`: `H` on `(0, r]`, the quadratic `c/2 t² + (b − cr) t + const` beyond, `C¹` at `r`.
    pub fn extend(&self) -> Result<Self> {
        let (a, b, c) = (self.raw(self.r), self.raw_d(self.r), self.raw_d2(self.r));
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(EnvelopeError::InvalidArgument(format!("H is not C² at r = {}", self.r)));
        }
        if !(c > T::zero()) {
            return Err(EnvelopeError::ExtensionNotConvex(c.to_f64().unwrap_or(f64::NAN)));
        }
        let out = Self { extension: Some(Quadratic { a, b, c }), ..self.clone() };
        let eps = lit::<T>(1e-8);
        let (below, above) = (self.r * (T::one() - eps), self.r * (T::one() + eps));
        let jump = (out.deriv(above) - out.deriv(below)).abs();
        if jump > lit::<T>(1e-6) * b.abs().max(T::one()) {
            return Err(EnvelopeError::InvalidArgument(format!("extension not C¹ at r: jump {jump}")));
        }
        Ok(out)
    }

    /// `(H')^{-1}(y)` by bisection.
    pub fn deriv_inverse(&self, y: T) -> Result<T> {
        if y <= T::zero() {
            return Ok(T::zero());
        }
        let mut hi = self.r;
        let mut guard = 0;
        while self.deriv(hi) < y {
            hi = hi * lit(2.0);
            guard += 1;
            if guard > 2000 || !hi.is_finite() {
                return Err(EnvelopeError::Numerical(format!("H' never reaches {y}")));
            }
        }
        let mut lo = T::zero();
        for _ in 0..200 {
            let mid = (lo + hi) * lit(0.5);
            if self.deriv(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * hi {
                break;
            }
        }
        Ok((lo + hi) * lit(0.5))
    }

    /// Convex conjugate `H*(y) = y x − H(x)` at `x = (H')^{-1}(y)`.
    pub fn conjugate(&self, y: T) -> Result<T> {
        let x = self.deriv_inverse(y)?;
        Ok(y * x - self.eval(x))
    }

    /// Sampled checks: vanishing at the origin, monotone convexity and sub-homogeneity on `(0, r]`.
    pub fn validate(&self) -> Result<()> {
        let tiny = lit::<T>(1e-12);
        let tol = lit::<T>(1e-8);
        if self.eval(tiny).abs() > tol {
            return Err(EnvelopeError::InvalidArgument("H(0) must vanish".into()));
        }
        // H' → 0 at the origin: positive and strictly shrinking along s = r, 1e-6, 1e-12
        let (d0, d1, d2) = (self.deriv(tiny), self.deriv(lit(1e-6)), self.deriv(self.r));
        if !(d0 >= T::zero() && d0 < d1 && d1 < d2) || d0 > d2 * lit(0.5) {
            return Err(EnvelopeError::InvalidArgument("H'(0) must vanish".into()));
        }
        let n = 64;
        let pts: Vec<T> = (1..=n).map(|i| self.r * lit::<T>(i as f64 / n as f64)).collect();
        let mut prev = T::zero();
        for &s in &pts {
            let v = self.eval(s);
            if !(v > prev) {
                return Err(EnvelopeError::InvalidArgument(format!("H not strictly increasing at {s}")));
            }
            prev = v;
        }
        for w in pts.windows(3) {
            let fd = self.eval(w[2]) - self.eval(w[1]) * lit(2.0) + self.eval(w[0]);
            if fd < -tol * self.eval(w[2]) {
                return Err(EnvelopeError::InvalidArgument(format!("H not convex near {}", w[1])));
            }
        }
        for &z in pts.iter().step_by(8) {
            for k in 1..8 {
                let theta = lit::<T>(k as f64 / 8.0);
                if self.eval(theta * z) > theta * self.eval(z) * (T::one() + tol) {
                    return Err(EnvelopeError::InvalidArgument(format!("H(θz) > θH(z) at θ={theta}, z={z}")));
                }
            }
        }
        Ok(())
    }
}
