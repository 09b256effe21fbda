//! Adaptive Gauss–Kronrod quadrature on finite and semi-infinite intervals,
//! plus Gauss–Legendre rules for fixed-order product integration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::num::{lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature did not converge on [{a}, {b}]: estimate {value:e}, error {error:e} after {intervals} intervals")]
    NoConvergence {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
        intervals: usize,
    },
    #[error("integrand produced a non-finite value at x = {x}")]
    NonFinite { x: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance<T> {
    pub rel: T,
    pub abs: T,
    pub max_intervals: usize,
}

impl<T: Real> Tolerance<T> {
    pub fn rel(rel: f64) -> Self {
        Self {
            rel: lit(rel),
            abs: T::min_positive_value(),
            max_intervals: 4000,
        }
    }

    pub fn with_abs(mut self, abs: T) -> Self {
        self.abs = abs;
        self
    }
}

impl<T: Real> Default for Tolerance<T> {
    fn default() -> Self {
        Self::rel(1e-10)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Result<(T, T), QuadError> {
    let half = (b - a) * lit(0.5);
    let center = (a + b) * lit(0.5);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite { x: center.to_f64().unwrap_or(f64::NAN) });
    }
    let mut kronrod = fc * lit(WGK[7]);
    let mut gauss = fc * lit(WG[3]);
    for j in 0..7 {
        let dx = half * lit(XGK[j]);
        let (x1, x2) = (center - dx, center + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() || !f2.is_finite() {
            let x = if f1.is_finite() { x2 } else { x1 };
            return Err(QuadError::NonFinite { x: x.to_f64().unwrap_or(f64::NAN) });
        }
        kronrod += lit::<T>(WGK[j]) * (f1 + f2);
        if j % 2 == 1 {
            gauss += lit::<T>(WG[j / 2]) * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Ok((value, error))
}

struct Piece<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Piece<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Real> Eq for Piece<T> {}
impl<T: Real> PartialOrd for Piece<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Piece<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive G7K15 integration of `f` over `[a, b]`.
pub fn integrate<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: Tolerance<T>) -> Result<Estimate<T>, QuadError> {
    if a == b {
        return Ok(Estimate { value: T::zero(), error: T::zero() });
    }
    let (value, error) = gk15(&mut f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let (mut total, mut total_err) = (value, error);
    let eps = T::epsilon() * lit(50.0);
    loop {
        if total_err <= tol.abs.max(tol.rel * total.abs()) {
            break;
        }
        if heap.len() >= tol.max_intervals {
            // Accept when the remaining error is at rounding level.
            if total_err <= eps * total.abs().max(tol.abs) * from_len::<T>(heap.len()) {
                break;
            }
            return Err(QuadError::NoConvergence {
                a: a.to_f64().unwrap_or(f64::NAN),
                b: b.to_f64().unwrap_or(f64::NAN),
                value: total.to_f64().unwrap_or(f64::NAN),
                error: total_err.to_f64().unwrap_or(f64::NAN),
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap never empty");
        let mid = (worst.a + worst.b) * lit(0.5);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine resolution; keep its contribution
            heap.push(Piece { error: T::zero(), ..worst });
            total_err = heap.iter().map(|p| p.error).sum();
            continue;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid)?;
        let (v2, e2) = gk15(&mut f, mid, worst.b)?;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
        if total_err < T::zero() {
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }
    // re-sum to shed accumulated update drift
    let value = heap.iter().map(|p| p.value).sum();
    Ok(Estimate { value, error: total_err })
}

fn from_len<T: Real>(n: usize) -> T {
    T::from_usize(n).unwrap_or_else(T::max_value)
}

/// `∫_a^∞ f(s) ds`: the piece `[a, a + split]` directly, the remainder through
/// `u = 1/(1+s)` so slowly decaying (power-law) tails map to a finite interval.
pub fn integrate_to_infinity<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    split: T,
    tol: Tolerance<T>,
) -> Result<Estimate<T>, QuadError> {
    let mid = a + split;
    let head = integrate(&mut f, a, mid, tol)?;
    let u_max = T::one() / (T::one() + mid);
    let tail = integrate(
        |u: T| {
            let s = T::one() / u - T::one();
            let v = f(s) / (u * u);
            if v.is_finite() {
                v
            } else {
                T::zero()
            }
        },
        T::zero(),
        u_max,
        Tolerance { abs: tol.abs.max(tol.rel * head.value.abs()), ..tol },
    )?;
    Ok(Estimate {
        value: head.value + tail.value,
        error: head.error + tail.error,
    })
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (
        nodes.iter().map(|&x| lit(0.5 * (x + 1.0))).collect(),
        weights.iter().map(|&w| lit(0.5 * w)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x: f64| 3.0 * x * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((r.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn power_tail_to_infinity() {
        // ∫_0^∞ (1+s)^{-2} ds = 1
        let r = integrate_to_infinity(|s: f64| (1.0 + s).powi(-2), 0.0, 10.0, Tolerance::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10, "{}", r.value);
        // ∫_0^∞ (1+s)^{-1.5} ds = 2
        let r = integrate_to_infinity(|s: f64| (1.0 + s).powf(-1.5), 0.0, 10.0, Tolerance::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn exponential_tail() {
        let r = integrate_to_infinity(|s: f64| (-s).exp(), 1.0, 10.0, Tolerance::default()).unwrap();
        assert!((r.value - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn divergent_integral_reports_error() {
        let r = integrate_to_infinity(|s: f64| 1.0 / (1.0 + s), 0.0, 10.0, Tolerance::default());
        assert!(r.is_err() || r.unwrap().value > 1e3);
    }

    #[test]
    fn gauss_legendre_integrates_degree_2n_minus_1() {
        let (x, w) = gauss_legendre_unit::<f64>(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(11)).sum();
        assert!((s - 1.0 / 12.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn works_in_single_precision() {
        let r = integrate(|x: f32| x.sin(), 0.0f32, std::f32::consts::PI, Tolerance::rel(1e-5)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-5);
    }
}
