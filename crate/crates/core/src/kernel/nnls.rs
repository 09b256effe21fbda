//! Lawson–Hanson nonnegative least squares.

use nalgebra::{DMatrix, DVector};

/// Solves `min ‖A x − y‖₂` subject to `x ≥ 0`; returns `(x, residual norm)`.
pub fn nnls(a: &DMatrix<f64>, y: &DVector<f64>, max_iter: usize) -> (DVector<f64>, f64) {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 10.0 * f64::EPSILON * scale * (a.nrows().max(n) as f64);

    for _ in 0..max_iter {
        let w = a.tr_mul(&(y - a * &x));
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;

        loop {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let z = solve_passive(a, y, &idx);
            if z.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = z[k];
                }
                break;
            }
            // step back to the feasible boundary and drop the variables that hit zero
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - z[k]));
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z[k] - x[i]);
                if x[i] <= tol {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    let res = (a * &x - y).norm();
    (x, res)
}

fn solve_passive(a: &DMatrix<f64>, y: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(idx);
    sub.svd(true, true)
        .solve(y, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(idx.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_optimum_is_kept() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (x, r) = nnls(&a, &y, 100);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
        assert!(r < 1e-12);
    }

    #[test]
    fn negative_component_clamped() {
        // unconstrained solution is (2, -1)
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let (x, _) = nnls(&a, &y, 100);
        assert!(x[1] == 0.0);
        assert!((x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kkt_conditions_hold() {
        let a = DMatrix::from_fn(12, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.3);
        let y = DVector::from_fn(12, |i, _| (i as f64).sin());
        let (x, _) = nnls(&a, &y, 500);
        let w = a.tr_mul(&(&y - &a * &x));
        for j in 0..5 {
            assert!(x[j] >= 0.0);
            if x[j] > 0.0 {
                assert!(w[j].abs() < 1e-9);
            } else {
                assert!(w[j] < 1e-9);
            }
        }
    }
}
