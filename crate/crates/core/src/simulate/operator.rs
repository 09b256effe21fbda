//! Packed unknowns `[ψ₀, φ₁, ψ₁, …, φ_N, ψ_N, ψ_{N+1}]`: `φ_i ↦ 2i−1`, `ψ_i ↦ 2i`.

use super::banded::SymBand;
use crate::kernel::BeamParams;
use crate::num::{lit, Real};
use crate::spatial::{FieldPair, Grid};

/// Half bandwidth of `SᵀHS` in the packed ordering.
pub const BAND: usize = 4;

#[derive(Debug, Clone)]
pub struct Operator<T> {
    pub n: usize,
    /// trapezoidal node weights
    pub h: Vec<T>,
    /// diagonal of the mass matrix
    pub mass: Vec<T>,
    /// strain rows as `(packed index, coefficient)`
    rows: Vec<Vec<(usize, T)>>,
    b_over_dx: T,
}

impl<T: Real> Operator<T> {
    pub fn new(grid: &Grid<T>, beam: &BeamParams<T>) -> Self {
        let n = grid.n;
        let dx = grid.dx;
        let half = T::one() / (dx + dx);
        let mut rows = Vec::with_capacity(n + 2);
        rows.push(vec![(1, T::one() / dx), (0, T::one())]);
        for i in 1..=n {
            let mut r = Vec::with_capacity(3);
            if i + 1 <= n {
                r.push((2 * i + 1, half));
            }
            if i >= 2 {
                r.push((2 * i - 3, -half));
            }
            r.push((2 * i, T::one()));
            rows.push(r);
        }
        rows.push(vec![(2 * n - 1, -T::one() / dx), (2 * n + 1, T::one())]);
        let h: Vec<T> = (0..n + 2).map(|i| grid.weight(i)).collect();
        let mut mass = vec![T::zero(); 2 * n + 2];
        for i in 0..n + 2 {
            mass[psi_index(n, i)] = beam.rho2 * h[i];
        }
        for i in 1..=n {
            mass[2 * i - 1] = beam.rho1 * dx;
        }
        Self { n, h, mass, rows, b_over_dx: beam.b / dx }
    }

    pub fn len(&self) -> usize {
        2 * self.n + 2
    }

    pub fn pack(&self, f: &FieldPair<T>) -> Vec<T> {
        let mut u = vec![T::zero(); self.len()];
        for i in 0..self.n + 2 {
            u[psi_index(self.n, i)] = f.psi[i];
        }
        for i in 1..=self.n {
            u[2 * i - 1] = f.phi[i];
        }
        u
    }

    pub fn unpack(&self, u: &[T]) -> FieldPair<T> {
        let mut phi = vec![T::zero(); self.n + 2];
        let psi = (0..self.n + 2).map(|i| u[psi_index(self.n, i)]).collect();
        for i in 1..=self.n {
            phi[i] = u[2 * i - 1];
        }
        FieldPair { phi, psi }
    }

    /// `s = S u`.
    pub fn strain(&self, u: &[T]) -> Vec<T> {
        self.rows.iter().map(|r| r.iter().map(|&(j, c)| c * u[j]).sum()).collect()
    }

    /// `out += scale · Sᵀ H w`.
    pub fn add_strain_adjoint(&self, w: &[T], scale: T, out: &mut [T]) {
        for (r, row) in self.rows.iter().enumerate() {
            let hw = scale * self.h[r] * w[r];
            for &(j, c) in row {
                out[j] += c * hw;
            }
        }
    }

    /// `out += scale · K_b u`, the bending stiffness acting on ψ.
    pub fn add_bending(&self, u: &[T], scale: T, out: &mut [T]) {
        let k = scale * self.b_over_dx;
        for i in 0..=self.n {
            let (a, b) = (psi_index(self.n, i), psi_index(self.n, i + 1));
            let d = k * (u[b] - u[a]);
            out[a] -= d;
            out[b] += d;
        }
    }

    /// `½ ψᵀ K_b ψ`.
    pub fn bending_energy(&self, u: &[T]) -> T {
        let sum: T = (0..=self.n)
            .map(|i| {
                let d = u[psi_index(self.n, i + 1)] - u[psi_index(self.n, i)];
                d * d
            })
            .sum();
        self.b_over_dx * sum * lit(0.5)
    }

    /// `M + dt²/4 (K_b + shear SᵀHS)`.
    pub fn system(&self, dt: T, shear: T) -> SymBand<T> {
        let q = dt * dt * lit(0.25);
        let mut a = SymBand::zeros(self.len(), BAND);
        for (i, &m) in self.mass.iter().enumerate() {
            a.add(i, i, m);
        }
        let kb = q * self.b_over_dx;
        for i in 0..=self.n {
            let (p, r) = (psi_index(self.n, i), psi_index(self.n, i + 1));
            a.add(p, p, kb);
            a.add(r, r, kb);
            a.add(r, p, -kb);
        }
        for (r, row) in self.rows.iter().enumerate() {
            let w = q * shear * self.h[r];
            for (x, &(i, ci)) in row.iter().enumerate() {
                for &(j, cj) in &row[..=x] {
                    a.add(i, j, w * ci * cj);
                }
            }
        }
        a
    }
}

/// `ψ_i ↦ 2i` for `i ≤ N`, `ψ_{N+1} ↦ 2N+1`.
fn psi_index(n: usize, i: usize) -> usize {
    if i == n + 1 {
        2 * n + 1
    } else {
        2 * i
    }
}
