//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the solver is generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Relative closeness `|a-b| <= tol * max(|a|,|b|,floor)`.
pub fn rel_close<T: Real>(a: T, b: T, tol: T, floor: T) -> bool {
    let scale = a.abs().max(b.abs()).max(floor);
    (a - b).abs() <= tol * scale
}

/// Geometric grid of `per_decade` points per decade on `[lo, hi]`, `lo > 0`.
pub fn geometric_grid<T: Real>(lo: T, hi: T, per_decade: usize) -> Vec<T> {
    let decades = (hi / lo).log10();
    let n = (decades * from_usize::<T>(per_decade)).ceil().to_usize().unwrap_or(1).max(1);
    let ratio = (hi / lo).ln() / from_usize::<T>(n);
    (0..=n).map(|i| lo * (ratio * from_usize::<T>(i)).exp()).collect()
}

/// `count` points spaced evenly in log between `lo` and `hi` inclusive.
pub fn log_space<T: Real>(lo: T, hi: T, count: usize) -> Vec<T> {
    assert!(count >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / from_usize::<T>(count - 1);
    (0..count).map(|i| (a + step * from_usize::<T>(i)).exp()).collect()
}
