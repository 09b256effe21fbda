//! Exponential-sum approximation of a relaxation kernel.

use nalgebra::{DMatrix, DVector};

use super::nnls::nnls;
use super::{KernelError, KernelSpec, Result};
use crate::num::{lit, Real};

/// `g(t) ≈ Σ a_j exp(-b_j t)` with the sup error measured on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PronySpec<T> {
    pub terms: Vec<(T, T)>,
    pub horizon: T,
    pub fit_error: T,
}

impl<T: Real> PronySpec<T> {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `(Σ a_j e^{-b_j t}, -Σ a_j b_j e^{-b_j t})`.
    pub fn eval(&self, t: T) -> (T, T) {
        self.terms.iter().fold((T::zero(), T::zero()), |(g, d), &(a, b)| {
            let e = a * (-b * t).exp();
            (g + e, d - b * e)
        })
    }

    /// `Σ a_j / b_j`.
    pub fn mass(&self) -> T {
        self.terms.iter().map(|&(a, b)| a / b).sum()
    }
}

/// Residual weighting of the least-squares stage. `fit_error` is always the absolute sup error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitWeighting {
    #[default]
    Absolute,
    /// residuals divided by `g`, so the slow tail stays accurate far beyond `g`'s scale
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PronyFitOptions {
    pub terms: usize,
    pub horizon: f64,
    pub tol: f64,
    pub weighting: FitWeighting,
    /// finest time scale resolved; the largest rate tried is `1/dt_min`
    pub dt_min: Option<f64>,
    /// Lawson reweighting passes pushing the least-squares fit toward minimax
    pub minimax_passes: usize,
}

impl PronyFitOptions {
    pub fn new(terms: usize, horizon: f64, tol: f64) -> Self {
        Self {
            terms,
            horizon,
            tol,
            weighting: FitWeighting::Absolute,
            dt_min: None,
            minimax_passes: 30,
        }
    }

    pub fn weighting(mut self, w: FitWeighting) -> Self {
        self.weighting = w;
        self
    }

    pub fn dt_min(mut self, dt: f64) -> Self {
        self.dt_min = Some(dt);
        self
    }
}

/// Fits `J` exponentials to `k` on `[0, horizon]` with sup error at most `tol`.
pub fn fit_prony<T: Real>(k: &KernelSpec<T>, j: usize, horizon: T, tol: T) -> Result<PronySpec<T>> {
    let opts = PronyFitOptions::new(j, to_f64(horizon), to_f64(tol));
    fit_prony_with(k, &opts)
}

pub fn fit_prony_with<T: Real>(k: &KernelSpec<T>, opts: &PronyFitOptions) -> Result<PronySpec<T>> {
    if opts.terms == 0 {
        return Err(KernelError::InvalidArgument("prony fit needs J ≥ 1".into()));
    }
    if !(opts.horizon > 0.0) || !opts.horizon.is_finite() {
        return Err(KernelError::InvalidArgument(format!("horizon {} must be positive", opts.horizon)));
    }
    if !(opts.tol > 0.0) {
        return Err(KernelError::InvalidArgument(format!("tolerance {} must be positive", opts.tol)));
    }
    let horizon = lit::<T>(opts.horizon);
    match k {
        KernelSpec::Exponential { a, lambda } => {
            return Ok(PronySpec { terms: vec![(*a, *lambda)], horizon, fit_error: T::zero() });
        }
        KernelSpec::Prony { terms } if terms.len() <= opts.terms => {
            return Ok(PronySpec { terms: terms.clone(), horizon, fit_error: T::zero() });
        }
        _ => {}
    }

    let char_time = to_f64(k.characteristic_time()).min(opts.horizon);
    let dt_min = opts.dt_min.unwrap_or(char_time * 1e-3).min(opts.horizon);
    let fit_grid = sample_grid(opts.horizon, dt_min * 1e-2, 40);
    let check_grid = sample_grid(opts.horizon, dt_min * 1e-2, 160);
    let g_fit = eval_all(k, &fit_grid)?;
    let g_check = eval_all(k, &check_grid)?;

    let lo0 = 1.0 / opts.horizon;
    let hi0 = 1.0 / dt_min;
    let check_base = base_weights(&g_check, opts.weighting);
    let mut best: Option<(f64, f64, Vec<(f64, f64)>)> = None;
    // sweep the rate window around [1/horizon, 1/dt_min]
    for lo_shift in [-1.5, -1.0, -0.5, 0.0, 0.5] {
        for hi_shift in [-2.0, -1.5, -1.0, -0.5, 0.0] {
            let lo = lo0 * 10f64.powf(lo_shift);
            let hi = hi0 * 10f64.powf(hi_shift);
            if hi <= lo * 1.0001 && opts.terms > 1 {
                continue;
            }
            let rates = if opts.terms == 1 {
                vec![(lo * hi).sqrt()]
            } else {
                crate::num::log_space(lo, hi, opts.terms)
            };
            let terms = fit_amplitudes(&fit_grid, &g_fit, &rates, opts);
            let weighted = sup_error(&check_grid, &g_check, &check_base, &terms);
            if best.as_ref().map_or(true, |(w, _, _)| weighted < *w) {
                let err = sup_error(&check_grid, &g_check, &vec![1.0; check_grid.len()], &terms);
                best = Some((weighted, err, terms));
            }
        }
    }
    let (_, err, terms) = best.expect("at least one rate window");
    if !(err <= opts.tol) {
        return Err(KernelError::FitFailed { best_error: err, tol: opts.tol, terms: opts.terms });
    }
    let terms: Vec<(T, T)> = terms
        .into_iter()
        .filter(|&(a, _)| a > 0.0)
        .map(|(a, b)| (lit(a), lit(b)))
        .collect();
    log::debug!("prony fit: {} active terms, sup error {err:e}", terms.len());
    Ok(PronySpec { terms, horizon, fit_error: lit(err) })
}

fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `0`, a linear fringe up to `lo`, then `per_decade` log-spaced points up to `horizon`.
fn sample_grid(horizon: f64, lo: f64, per_decade: usize) -> Vec<f64> {
    let lo = lo.min(horizon * 1e-3).max(horizon * 1e-14);
    let mut grid = vec![0.0];
    grid.extend((1..8).map(|i| lo * i as f64 / 8.0));
    grid.extend(crate::num::geometric_grid(lo, horizon, per_decade));
    grid
}

fn eval_all<T: Real>(k: &KernelSpec<T>, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter().map(|&t| Ok(to_f64(k.value(lit(t))))).collect()
}

fn base_weights(g: &[f64], w: FitWeighting) -> Vec<f64> {
    match w {
        FitWeighting::Absolute => vec![1.0; g.len()],
        FitWeighting::Relative => g.iter().map(|&v| 1.0 / v.max(f64::MIN_POSITIVE)).collect(),
    }
}

fn fit_amplitudes(grid: &[f64], g: &[f64], rates: &[f64], opts: &PronyFitOptions) -> Vec<(f64, f64)> {
    let m = grid.len();
    let base = base_weights(g, opts.weighting);
    let mut weights = base.clone();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..=opts.minimax_passes {
        let mut a = DMatrix::from_fn(m, rates.len(), |i, j| weights[i] * (-rates[j] * grid[i]).exp());
        // unit columns keep NNLS well scaled when the weights span many decades
        let norms: Vec<f64> = a.column_iter().map(|c| c.norm().max(f64::MIN_POSITIVE)).collect();
        for (j, n) in norms.iter().enumerate() {
            a.column_mut(j).unscale_mut(*n);
        }
        let y = DVector::from_fn(m, |i, _| weights[i] * g[i]);
        let (x, _) = nnls(&a, &y, 20 * rates.len() + 50);
        let amps: Vec<f64> = x.iter().zip(&norms).map(|(v, n)| v / n).collect();
        let errs: Vec<f64> = (0..m)
            .map(|i| {
                let approx: f64 = rates.iter().zip(&amps).map(|(b, a)| a * (-b * grid[i]).exp()).sum();
                (approx - g[i]).abs() * base[i]
            })
            .collect();
        let sup = errs.iter().fold(0.0f64, |s, &e| s.max(e));
        if best.as_ref().map_or(true, |(e, _)| sup < *e) {
            best = Some((sup, amps));
        }
        if sup == 0.0 {
            break;
        }
        // Lawson update: emphasise points where the error is large
        for i in 0..m {
            weights[i] *= (errs[i] / sup).sqrt().max(1e-3);
        }
        let norm = weights.iter().zip(&base).map(|(w, b)| w / b).fold(0.0f64, f64::max);
        for w in weights.iter_mut() {
            *w /= norm;
        }
    }
    let (_, amps) = best.expect("at least one pass");
    amps.into_iter().zip(rates.iter().copied()).collect()
}

fn sup_error(grid: &[f64], g: &[f64], base: &[f64], terms: &[(f64, f64)]) -> f64 {
    grid.iter()
        .zip(g)
        .zip(base)
        .map(|((&t, &gv), &w)| {
            let approx: f64 = terms.iter().map(|&(a, b)| a * (-b * t).exp()).sum();
            (approx - gv).abs() * w
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_is_recovered_exactly() {
        let k = KernelSpec::exponential(1.0, 1.0).unwrap();
        let p = fit_prony(&k, 1, 10.0, 1e-12).unwrap();
        assert_eq!(p.terms, vec![(1.0, 1.0)]);
        assert_eq!(p.fit_error, 0.0);
    }

    #[test]
    fn prony_is_identity() {
        let k = KernelSpec::prony(vec![(0.3, 1.0), (0.2, 2.0)]).unwrap();
        let p = fit_prony(&k, 2, 10.0, 1e-12).unwrap();
        assert_eq!(p.terms, vec![(0.3, 1.0), (0.2, 2.0)]);
        assert_eq!(p.fit_error, 0.0);
    }

    #[test]
    fn power_law_eight_terms() {
        let k = KernelSpec::power_law(0.99, 2.0).unwrap();
        let p = fit_prony(&k, 8, 100.0, 1e-4).unwrap();
        assert!(p.fit_error <= 1e-4);
        // independent check on a uniform grid
        for i in 0..=20_000 {
            let t = i as f64 * 100.0 / 20_000.0;
            let exact = 0.99 / (1.0 + t).powi(2);
            assert!((p.eval(t).0 - exact).abs() <= 1.05e-4, "t={t}");
        }
    }

    #[test]
    fn approximant_is_monotone_and_nonnegative() {
        let k = KernelSpec::power_law(1.94, 3.0).unwrap();
        let p = fit_prony(&k, 10, 50.0, 1e-3).unwrap();
        assert!(p.terms.iter().all(|&(a, b)| a >= 0.0 && b > 0.0));
        let mut prev = f64::INFINITY;
        for i in 0..1000 {
            let (g, dg) = p.eval(i as f64 * 0.05);
            assert!(g >= 0.0 && dg <= 0.0 && g <= prev);
            prev = g;
        }
    }

    #[test]
    fn unreachable_tolerance_reports_best() {
        let k = KernelSpec::power_law(0.99, 2.0).unwrap();
        match fit_prony(&k, 2, 100.0, 1e-9) {
            Err(KernelError::FitFailed { best_error, terms, .. }) => {
                assert!(best_error > 1e-9);
                assert_eq!(terms, 2);
            }
            other => panic!("expected fit failure, got {other:?}"),
        }
    }

    #[test]
    fn zero_terms_rejected() {
        let k = KernelSpec::power_law(0.99, 2.0).unwrap();
        assert!(matches!(fit_prony(&k, 0, 10.0, 1e-3), Err(KernelError::InvalidArgument(_))));
    }
}
