use super::convex::ConvexH;
use super::{EnvelopeError, Result};
use crate::num::{lit, log_space, Real};
use crate::quad::{integrate, Tolerance};

/// Numeric `G₁ … G₄` built from a convex `H`.
#[derive(Debug, Clone)]
pub struct GFunctions<T> {
    h: ConvexH<T>,
    /// `(t, G₃(t))` on a log grid, the starting point of every conjugate evaluation
    g3_grid: Vec<(T, T)>,
}

const G4_GRID: usize = 512;

impl<T: Real> GFunctions<T> {
    pub fn new(h: ConvexH<T>) -> Result<Self> {
        let ts = log_space(lit::<T>(1e-12), lit::<T>(1e12), G4_GRID);
        let mut g3_grid = Vec::with_capacity(ts.len());
        for t in ts {
            g3_grid.push((t, t * h.deriv_inverse(t)?));
        }
        Ok(Self { h, g3_grid })
    }

    pub fn h(&self) -> &ConvexH<T> {
        &self.h
    }

    /// `G₁(t) = ∫_t^1 ds / (s H'(s))`, integrated in `ln s`.
    pub fn g1(&self, t: T) -> Result<T> {
        if !(t > T::zero()) {
            return Ok(T::infinity());
        }
        let est = integrate(|u: T| T::one() / self.h.deriv(u.exp()), t.ln(), T::zero(), Tolerance::rel(1e-13))
            .map_err(|e| EnvelopeError::Numerical(e.to_string()))?;
        Ok(est.value)
    }

    /// `G₁⁻¹(y)` on `(0, 1]`: Newton in `ln t` kept inside a shrinking bisection bracket.
    pub fn g1_inv(&self, y: T) -> Result<T> {
        if y <= T::zero() {
            return Ok(T::one());
        }
        // bracket [lo, hi] in u = ln t with G₁(e^lo) ≥ y ≥ G₁(e^hi)
        let (mut lo, mut hi) = (-T::one(), T::zero());
        while self.g1(lo.exp())? < y {
            hi = lo;
            lo = lo * lit(2.0);
            if lo < lit(-700.0) {
                return Err(EnvelopeError::Numerical(format!("G₁⁻¹({y}) below representable range")));
            }
        }
        let mut u = (lo + hi) * lit(0.5);
        for _ in 0..200 {
            let r = self.g1(u.exp())? - y;
            if r > T::zero() {
                lo = u;
            } else {
                hi = u;
            }
            // dG₁/du = −1/H'(e^u)
            let step = r * self.h.deriv(u.exp());
            let mut next = u + step;
            if !(next > lo && next < hi) {
                next = (lo + hi) * lit(0.5);
            }
            if (next - u).abs() <= lit::<T>(1e-13) * (T::one() + u.abs()) || hi - lo <= lit::<T>(1e-14) {
                return Ok(next.exp());
            }
            u = next;
        }
        Ok(u.exp())
    }

    /// `G₂(t) = t H'(t)`.
    pub fn g2(&self, t: T) -> T {
        t * self.h.deriv(t)
    }

    /// `G₃(t) = t (H')⁻¹(t)`.
    pub fn g3(&self, t: T) -> Result<T> {
        Ok(t * self.h.deriv_inverse(t)?)
    }

    /// `G₄(s) = sup_t (s t − G₃(t))`: grid maximum refined by golden section.
    pub fn g4(&self, s: T) -> Result<T> {
        if s <= T::zero() {
            return Ok(T::zero());
        }
        let objective = |t: T, g3: T| s * t - g3;
        let (mut best, mut best_i) = (T::zero(), None);
        for (i, &(t, g3)) in self.g3_grid.iter().enumerate() {
            let v = objective(t, g3);
            if v > best {
                best = v;
                best_i = Some(i);
            }
        }
        let Some(i) = best_i else { return Ok(T::zero()) };
        let lo = if i == 0 { T::zero() } else { self.g3_grid[i - 1].0 };
        let hi = self.g3_grid[(i + 1).min(self.g3_grid.len() - 1)].0;
        let f = |t: T| -> Result<T> { Ok(objective(t, self.g3(t)?)) };
        let ratio = lit::<T>((5f64.sqrt() - 1.0) / 2.0);
        let (mut a, mut b) = (lo, hi);
        let mut c = b - (b - a) * ratio;
        let mut d = a + (b - a) * ratio;
        let (mut fc, mut fd) = (f(c)?, f(d)?);
        for _ in 0..200 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - (b - a) * ratio;
                fc = f(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + (b - a) * ratio;
                fd = f(d)?;
            }
            if b - a <= lit::<T>(1e-14) * b {
                break;
            }
        }
        Ok(best.max(fc).max(fd))
    }
}

/// Closed forms for `H(s) = s^{(ν+1)/ν}` with constant `ξ`.
pub mod closed {
    use crate::num::Real;

    fn p<T: Real>(nu: T) -> T {
        (nu + T::one()) / nu
    }

    /// `a₂ = ν²/(ν+1)`.
    pub fn a2<T: Real>(nu: T) -> T {
        nu * nu / (nu + T::one())
    }

    /// `a₃ = p^{−ν}`.
    pub fn a3<T: Real>(nu: T) -> T {
        p(nu).powf(-nu)
    }

    /// `G₄(s) = a₀ s^p` with `a₀ = ν/(ν+1) · (a₃(ν+1))^{−1/ν}`.
    pub fn a0<T: Real>(nu: T) -> T {
        nu / (nu + T::one()) * (a3(nu) * (nu + T::one())).powf(-T::one() / nu)
    }

    /// `ξ = ν a^{−1/ν}` makes `g' = −ξ H(g)` hold with equality for `g = a(1+t)^{−ν}`.
    pub fn xi<T: Real>(a: T, nu: T) -> T {
        nu * a.powf(-T::one() / nu)
    }

    pub fn g1<T: Real>(nu: T, t: T) -> T {
        a2(nu) * (t.powf(-T::one() / nu) - T::one())
    }

    pub fn g1_inv<T: Real>(nu: T, y: T) -> T {
        (T::one() + y / a2(nu)).powf(-nu)
    }

    pub fn g2<T: Real>(nu: T, t: T) -> T {
        p(nu) * t.powf(p(nu))
    }

    pub fn g3<T: Real>(nu: T, t: T) -> T {
        a3(nu) * t.powf(nu + T::one())
    }

    pub fn g4<T: Real>(nu: T, s: T) -> T {
        a0(nu) * s.powf(p(nu))
    }

    /// `G₅(t) = (1 + c₁ ξ t / a₂)^{−ν}`.
    pub fn g5<T: Real>(nu: T, c1: T, xi: T, t: T) -> T {
        (T::one() + c1 * xi * t / a2(nu)).powf(-nu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::convex::make_h_power;

    fn square() -> GFunctions<f64> {
        GFunctions::new(ConvexH::custom(|s: f64| s * s, |s| 2.0 * s, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn quadratic_g1() {
        let g = square();
        assert!((g.g1(0.5).unwrap() - 0.5).abs() < 1e-13);
        assert_eq!(g.g1(1.0).unwrap(), 0.0);
        assert_eq!(g.g1_inv(0.0).unwrap(), 1.0);
        assert!((g.g1_inv(0.5).unwrap() - 0.5).abs() < 1e-11);
    }

    #[test]
    fn power_matches_closed_forms() {
        for nu in [1.5f64, 2.0, 3.0] {
            let g = GFunctions::new(make_h_power(nu).unwrap()).unwrap();
            for t in log_space(1e-4f64, 1.0, 12) {
                let exact = closed::g1(nu, t);
                if exact > 0.0 {
                    assert!((g.g1(t).unwrap() - exact).abs() <= 1e-10 * exact, "ν={nu} t={t}");
                }
                assert!((g.g2(t) - closed::g2(nu, t)).abs() <= 1e-13 * closed::g2(nu, t));
                assert!((g.g3(t).unwrap() - closed::g3(nu, t)).abs() <= 1e-12 * closed::g3(nu, t));
            }
            for s in log_space(1e-6f64, 10.0, 12) {
                let exact = closed::g4(nu, s);
                assert!((g.g4(s).unwrap() - exact).abs() <= 1e-9 * exact, "ν={nu} s={s}");
            }
        }
    }

    #[test]
    fn conjugate_is_an_upper_envelope() {
        let g = GFunctions::new(make_h_power(2.0f64).unwrap()).unwrap();
        for s in [0.01, 0.3, 2.0] {
            let g4 = g.g4(s).unwrap();
            for t in log_space(1e-3f64, 10.0, 40) {
                assert!(g4 >= s * t - g.g3(t).unwrap() - 1e-14);
            }
        }
    }

    #[test]
    fn inverse_round_trip_far_out() {
        let g = GFunctions::new(make_h_power(3.0f64).unwrap()).unwrap();
        let y_max = g.g1(1e-6).unwrap();
        for y in log_space(1e-3, y_max, 20) {
            let t = g.g1_inv(y).unwrap();
            assert!((g.g1(t).unwrap() - y).abs() <= 1e-8 * y);
        }
    }
}
