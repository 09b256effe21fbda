//! Energy bookkeeping, the dissipation and Jensen checks, decay fits and the
//! envelope comparisons, all as pure functions of a recorded [`Series`].

use thiserror::Error;

use crate::envelope::{EnvelopeError, EnvelopeModel};
use crate::kernel::{BeamParams, KernelError};
use crate::num::{from_usize, lit, Real};
use crate::simulate::Series;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient data: {usable} usable samples, need at least {needed}")]
    InsufficientData { usable: usize, needed: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
}

pub type Result<T> = std::result::Result<T, DiagError>;

/// Minimum samples for a decay fit.
pub const MIN_FIT_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown<T> {
    pub e_kin_phi: T,
    pub e_kin_psi: T,
    pub e_bend: T,
    pub e_shear: T,
    pub e_mem: T,
    /// `(E^{n+1} − E^n)/Δt − (κ/2)(g'∘s)^{n+1/2}` over the step ending here; `g' ≤ 0` makes the
    /// second term the (nonnegative) dissipation rate
    pub diss_residual: T,
}

impl<T: Real> EnergyBreakdown<T> {
    pub fn total(&self) -> T {
        self.e_kin_phi + self.e_kin_psi + self.e_bend + self.e_shear + self.e_mem
    }

    /// Every component nonnegative up to `tol · total`.
    pub fn is_nonnegative(&self, tol: T) -> bool {
        let floor = -tol * self.total().abs();
        [self.e_kin_phi, self.e_kin_psi, self.e_bend, self.e_shear, self.e_mem].iter().all(|&e| e >= floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport<T> {
    /// one residual per recorded time after the first
    pub residuals: Vec<T>,
    pub max_abs: T,
}

/// Dissipation-identity residuals of the recorded steps.
pub fn dissipation_residual<T: Real>(series: &Series<T>) -> ResidualReport<T> {
    let residuals: Vec<T> = series.records.iter().skip(1).map(|r| r.energy.diss_residual).collect();
    let max_abs = residuals.iter().fold(T::zero(), |m, r| m.max(r.abs()));
    ResidualReport { residuals, max_abs }
}

/// Largest single-step increase `max(E^{k+1} − E^k, 0)` along the recorded series.
pub fn max_energy_increase<T: Real>(series: &Series<T>) -> T {
    series
        .records
        .windows(2)
        .map(|w| w[1].energy.total() - w[0].energy.total())
        .fold(T::zero(), T::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JensenReport<T> {
    pub c_alpha: T,
    /// `min (RHS − LHS)` over the records
    pub worst_margin: T,
    pub worst_t: T,
    pub max_rhs: T,
    pub max_lhs: T,
}

/// `‖∫g (s(t) − s(t−a)) da‖² ≤ C_α ((αg − g')∘s)(t)` at every record.
pub fn jensen_check<T: Real>(series: &Series<T>, alpha: T) -> Result<JensenReport<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(DiagError::InvalidArgument(format!("α = {alpha} must lie in (0, 1)")));
    }
    let c_alpha = series.kernel.c_alpha(alpha)?;
    let mut rep = JensenReport {
        c_alpha,
        worst_margin: T::infinity(),
        worst_t: T::zero(),
        max_rhs: T::zero(),
        max_lhs: T::zero(),
    };
    for r in &series.records {
        let rhs = c_alpha * (alpha * r.g_circ - r.dg_circ);
        let margin = rhs - r.jensen_lhs;
        if margin < rep.worst_margin {
            rep.worst_margin = margin;
            rep.worst_t = r.t;
        }
        rep.max_rhs = rep.max_rhs.max(rhs);
        rep.max_lhs = rep.max_lhs.max(r.jensen_lhs);
    }
    if series.records.is_empty() {
        rep.worst_margin = T::zero();
    }
    Ok(rep)
}

/// `E ≈ C (1+t)^{−β}`, optionally times `(1 + ln(1+t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit<T> {
    pub exponent: T,
    pub amplitude: T,
    pub r2: T,
    pub window: (T, T),
    pub log_corrected: bool,
    pub samples: usize,
}

/// Least squares of `ln E` against `ln(1+t)` over the final `window_fraction` of the
/// samples; with `expect_log` the factor `1 + ln(1+t)` is divided out first.
pub fn fit_decay<T: Real>(times: &[T], energies: &[T], window_fraction: T, expect_log: bool) -> Result<DecayFit<T>> {
    if times.len() != energies.len() {
        return Err(DiagError::InvalidArgument("times and energies differ in length".into()));
    }
    if !(window_fraction > T::zero() && window_fraction <= T::one()) {
        return Err(DiagError::InvalidArgument(format!("window fraction {window_fraction} must lie in (0, 1]")));
    }
    let n = times.len();
    let keep = (from_usize::<T>(n) * window_fraction).ceil().to_usize().unwrap_or(n).min(n);
    let mut start = n - keep;
    // shrink to the last strictly positive run
    if let Some(bad) = (start..n).rev().find(|&i| !(energies[i] > T::zero()) || times[i] < T::zero()) {
        start = bad + 1;
    }
    let usable = n - start;
    if usable < MIN_FIT_SAMPLES {
        return Err(DiagError::InsufficientData { usable, needed: MIN_FIT_SAMPLES });
    }
    let xs: Vec<T> = times[start..].iter().map(|&t| (T::one() + t).ln()).collect();
    let ys: Vec<T> = energies[start..]
        .iter()
        .zip(&xs)
        .map(|(&e, &x)| if expect_log { e.ln() - (T::one() + x).ln() } else { e.ln() })
        .collect();
    let m = from_usize::<T>(usable);
    let mx = xs.iter().copied().sum::<T>() / m;
    let my = ys.iter().copied().sum::<T>() / m;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if !(sxx > T::zero()) {
        return Err(DiagError::InvalidArgument("fit window spans a single time".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > T::zero() { (sxy * sxy / (sxx * syy)).min(T::one()) } else { T::one() };
    Ok(DecayFit {
        exponent: -slope,
        amplitude: intercept.exp(),
        r2,
        window: (times[start], times[n - 1]),
        log_corrected: expect_log,
        samples: usable,
    })
}

/// `(κ/ρ₁ = b/ρ₂ to 1e-12 relative, |κ/ρ₁ − b/ρ₂|)`.
pub fn wave_speed_check<T: Real>(beam: &BeamParams<T>) -> (bool, T) {
    let (a, b) = (beam.shear_speed_sq(), beam.bending_speed_sq());
    let gap = (a - b).abs();
    (gap <= lit::<T>(1e-12) * a.max(b), gap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeReport<T> {
    /// `(t, ∫₀^t E / f(t))`
    pub ratios: Vec<(T, T)>,
    pub sup: T,
    pub t_sup: T,
    /// least-squares slope of the ratio against `t` over the final quarter
    pub final_quarter_slope: T,
}

/// `ρ(t) = (∫₀^t E) / f(t)` by trapezoidal accumulation.
pub fn cumulative_energy_monitor<T: Real>(series: &Series<T>, model: &EnvelopeModel<T>) -> Result<CumulativeReport<T>> {
    let mut ratios = Vec::with_capacity(series.records.len());
    let mut acc = T::zero();
    let half = lit::<T>(0.5);
    for (i, r) in series.records.iter().enumerate() {
        if i > 0 {
            let p = &series.records[i - 1];
            acc += half * (r.t - p.t) * (r.energy.total() + p.energy.total());
        }
        ratios.push((r.t, acc / model.f(r.t)?));
    }
    let (mut sup, mut t_sup) = (T::zero(), T::zero());
    for &(t, v) in &ratios {
        if v > sup {
            sup = v;
            t_sup = t;
        }
    }
    let tail = &ratios[ratios.len() - ratios.len() / 4..];
    let final_quarter_slope = if tail.len() >= 2 {
        let m = from_usize::<T>(tail.len());
        let mt = tail.iter().map(|p| p.0).sum::<T>() / m;
        let mv = tail.iter().map(|p| p.1).sum::<T>() / m;
        let sxx: T = tail.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
        let sxy: T = tail.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
        if sxx > T::zero() {
            sxy / sxx
        } else {
            T::zero()
        }
    } else {
        T::zero()
    };
    Ok(CumulativeReport { ratios, sup, t_sup, final_quarter_slope })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeComparison<T> {
    /// records with `E > bound · (1 + 1e-6)`
    pub violations: usize,
    pub max_ratio: T,
    pub t_max_ratio: T,
}

/// Counts records above `bound(t)`.
pub fn compare_to_bound<T: Real, F: FnMut(T) -> Result<T>>(
    times: &[T],
    energies: &[T],
    mut bound: F,
) -> Result<EnvelopeComparison<T>> {
    let mut out = EnvelopeComparison { violations: 0, max_ratio: T::zero(), t_max_ratio: T::zero() };
    let slack = T::one() + lit(1e-6);
    for (&t, &e) in times.iter().zip(energies) {
        let b = bound(t)?;
        if e > b * slack {
            out.violations += 1;
        }
        let ratio = if b > T::zero() { e / b } else if e > T::zero() { T::infinity() } else { T::zero() };
        if ratio > out.max_ratio {
            out.max_ratio = ratio;
            out.t_max_ratio = t;
        }
    }
    Ok(out)
}

/// [`compare_to_bound`] against `C G₅/(χ q)` of a certified model.
pub fn envelope_compare<T: Real>(series: &Series<T>, model: &EnvelopeModel<T>, c: T) -> Result<EnvelopeComparison<T>> {
    compare_to_bound(&series.times(), &series.energies(), |t| Ok(model.predicted_envelope(c, t)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_fit() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 5.0).collect();
        let e: Vec<f64> = t.iter().map(|&t| 5.0 * (1.0 + t).powf(-1.5)).collect();
        let f = fit_decay(&t, &e, 0.5, false).unwrap();
        assert!((f.exponent - 1.5).abs() < 1e-10);
        assert!((f.amplitude - 5.0).abs() < 1e-8);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert_eq!(f.samples, 100);
    }

    #[test]
    fn log_corrected_fit() {
        let t: Vec<f64> = (1..300).map(|i| i as f64 * 3.0).collect();
        let e: Vec<f64> = t.iter().map(|&t| (1.0 + (1.0 + t).ln()) / (1.0 + t)).collect();
        let f = fit_decay(&t, &e, 0.5, true).unwrap();
        assert!((f.exponent - 1.0).abs() < 1e-8);
        assert!(f.log_corrected);
    }

    #[test]
    fn too_few_samples() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let e = [1.0, 0.5, 0.3, 0.2, 0.1];
        assert!(matches!(fit_decay(&t, &e, 1.0, false), Err(DiagError::InsufficientData { usable: 5, .. })));
    }

    #[test]
    fn nonpositive_samples_shrink_window() {
        let t: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let mut e: Vec<f64> = t.iter().map(|&t| (1.0 + t).powi(-2)).collect();
        e[25] = 0.0;
        let f = fit_decay(&t, &e, 0.5, false).unwrap();
        assert_eq!(f.window.0, 26.0);
        assert!((f.exponent - 2.0).abs() < 1e-10);
    }

    #[test]
    fn wave_speeds() {
        let b = |k, r1, bb, r2| BeamParams::new(r1, r2, bb, k, 1.0f64).unwrap();
        assert!(wave_speed_check(&b(2.0, 1.0, 4.0, 2.0)).0);
        let (eq, gap) = wave_speed_check(&b(1.0, 1.0, 2.0, 1.0));
        assert!(!eq);
        assert_eq!(gap, 1.0);
        assert!(wave_speed_check(&b(3.0, 5.0, 3.0, 5.0)).0);
    }

    #[test]
    fn bound_comparison() {
        let t = [0.0, 1.0, 2.0];
        let e = [1.0, 0.5, 0.25];
        let c = compare_to_bound(&t, &e, |t: f64| Ok(0.5f64.powf(t))).unwrap();
        assert_eq!(c.violations, 0);
        assert!((c.max_ratio - 1.0).abs() < 1e-15);
        let c = compare_to_bound(&t, &e, |_| Ok(0.4)).unwrap();
        assert_eq!(c.violations, 2);
    }

    #[test]
    fn energy_total_and_sign() {
        let e = EnergyBreakdown { e_kin_phi: 1.0, e_kin_psi: 2.0, e_bend: 0.5, e_shear: 0.25, e_mem: 0.125, diss_residual: 3.0 };
        assert_eq!(e.total(), 3.875);
        assert!(e.is_nonnegative(0.0));
        assert!(!EnergyBreakdown { e_mem: -1.0, ..e }.is_nonnegative(1e-12));
    }
}
