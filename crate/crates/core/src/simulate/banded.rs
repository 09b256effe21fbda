use crate::num::Real;

/// Symmetric positive definite band matrix; `lower[i][k] = A(i, i-k)` for `k ≤ width`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand<T> {
    width: usize,
    lower: Vec<Vec<T>>,
}

impl<T: Real> SymBand<T> {
    pub fn zeros(n: usize, width: usize) -> Self {
        Self { width, lower: vec![vec![T::zero(); width + 1]; n] }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Adds `v` to `A(i, j)` (and implicitly `A(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(r - c <= self.width);
        self.lower[r][r - c] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.width {
            T::zero()
        } else {
            self.lower[r][r - c]
        }
    }

    pub fn mul(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            y[i] += self.lower[i][0] * x[i];
            for k in 1..=self.width.min(i) {
                let a = self.lower[i][k];
                y[i] += a * x[i - k];
                y[i - k] += a * x[i];
            }
        }
        y
    }

    /// `A = L Lᵀ`; `None` when a pivot is not positive.
    pub fn cholesky(&self) -> Option<BandCholesky<T>> {
        let (n, p) = (self.len(), self.width);
        let mut l = vec![vec![T::zero(); p + 1]; n];
        for j in 0..n {
            let mut d = self.lower[j][0];
            for k in 1..=p.min(j) {
                d -= l[j][k] * l[j][k];
            }
            if !(d > T::zero()) {
                return None;
            }
            let d = d.sqrt();
            l[j][0] = d;
            for i in j + 1..n.min(j + p + 1) {
                // L(i, j) = (A(i, j) − Σ_k L(i, k) L(j, k)) / L(j, j)
                let mut v = self.lower[i][i - j];
                for k in i.saturating_sub(p)..j {
                    v -= l[i][i - k] * l[j][j - k];
                }
                l[i][i - j] = v / d;
            }
        }
        Some(BandCholesky { width: p, l })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandCholesky<T> {
    width: usize,
    l: Vec<Vec<T>>,
}

impl<T: Real> BandCholesky<T> {
    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, p) = (self.l.len(), self.width);
        for i in 0..n {
            let mut v = b[i];
            for k in 1..=p.min(i) {
                v -= self.l[i][k] * b[i - k];
            }
            b[i] = v / self.l[i][0];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in 1..=p.min(n - 1 - i) {
                v -= self.l[i + k][k] * b[i + k];
            }
            b[i] = v / self.l[i][0];
        }
    }
}
