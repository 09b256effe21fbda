//! Collocated finite differences on `[0, L]` with `φ = 0` and `ψ_x = 0` at both ends.
//!
//! The shear strain uses the summation-by-parts first-derivative operator
//! (centered inside, one-sided at the two boundary nodes) against the
//! trapezoidal inner product, so `⟨D u, v⟩ = −⟨u, D v⟩` whenever `u` vanishes at
//! both ends.

use thiserror::Error;

use crate::kernel::BeamParams;
use crate::num::{from_usize, lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("length mismatch: expected {expected} nodes, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("Dirichlet condition violated: phi[{index}] = {value}")]
    Dirichlet { index: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, SpatialError>;

/// `N` interior nodes; `x_i = i dx`, `i = 0..=N+1`, `dx = L/(N+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    pub n: usize,
    pub dx: T,
    pub length: T,
}

impl<T: Real> Grid<T> {
    pub fn new(n: usize, length: T) -> Result<Self> {
        if n < 4 {
            return Err(SpatialError::InvalidGrid(format!("need N ≥ 4 interior nodes, got {n}")));
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(SpatialError::InvalidGrid(format!("length {length} must be positive")));
        }
        Ok(Self { n, dx: length / from_usize(n + 1), length })
    }

    /// Node count including both boundary nodes.
    pub fn len(&self) -> usize {
        self.n + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> T {
        from_usize::<T>(i) * self.dx
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.x(i)).collect()
    }

    /// Trapezoidal weight of node `i`.
    pub fn weight(&self, i: usize) -> T {
        if i == 0 || i == self.n + 1 {
            self.dx * lit(0.5)
        } else {
            self.dx
        }
    }

    fn check(&self, v: &[T]) -> Result<()> {
        if v.len() != self.len() {
            return Err(SpatialError::Shape { expected: self.len(), got: v.len() });
        }
        Ok(())
    }
}

/// Nodal values of `(φ, ψ)` or of their time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair<T> {
    pub phi: Vec<T>,
    pub psi: Vec<T>,
}

impl<T: Real> FieldPair<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        Self { phi: vec![T::zero(); grid.len()], psi: vec![T::zero(); grid.len()] }
    }

    /// Samples `φ` and `ψ` at the nodes; `φ` is pinned to zero at both ends.
    pub fn from_fn<F: Fn(T) -> T, G: Fn(T) -> T>(grid: &Grid<T>, phi: F, psi: G) -> Self {
        let mut out = Self {
            phi: grid.nodes().into_iter().map(&phi).collect(),
            psi: grid.nodes().into_iter().map(&psi).collect(),
        };
        out.phi[0] = T::zero();
        out.phi[grid.n + 1] = T::zero();
        out
    }

    pub fn validate(&self, grid: &Grid<T>) -> Result<()> {
        grid.check(&self.phi)?;
        grid.check(&self.psi)?;
        for i in [0, grid.n + 1] {
            if self.phi[i] != T::zero() {
                return Err(SpatialError::Dirichlet { index: i, value: self.phi[i].to_f64().unwrap_or(f64::NAN) });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.phi.iter().chain(&self.psi).all(|v| v.is_finite())
    }
}

/// Summation-by-parts first derivative: centered inside, one-sided at the ends.
pub fn d_x<T: Real>(u: &[T], grid: &Grid<T>) -> Vec<T> {
    let m = grid.n + 1;
    let mut out = vec![T::zero(); u.len()];
    let inv2 = T::one() / (grid.dx + grid.dx);
    out[0] = (u[1] - u[0]) / grid.dx;
    for i in 1..m {
        out[i] = (u[i + 1] - u[i - 1]) * inv2;
    }
    out[m] = (u[m] - u[m - 1]) / grid.dx;
    out
}

/// `ψ_xx` with `ψ_x = 0` imposed by reflecting the neighbor across each end.
pub fn d_xx_neumann<T: Real>(psi: &[T], grid: &Grid<T>) -> Vec<T> {
    let m = grid.n + 1;
    let inv = T::one() / (grid.dx * grid.dx);
    let mut out = vec![T::zero(); psi.len()];
    out[0] = (psi[1] - psi[0]) * lit::<T>(2.0) * inv;
    for i in 1..m {
        out[i] = (psi[i + 1] - psi[i] * lit(2.0) + psi[i - 1]) * inv;
    }
    out[m] = (psi[m - 1] - psi[m]) * lit::<T>(2.0) * inv;
    out
}

/// `s = φ_x + ψ` at every node.
pub fn shear_strain<T: Real>(f: &FieldPair<T>, grid: &Grid<T>) -> Vec<T> {
    let mut s = d_x(&f.phi, grid);
    for (si, &p) in s.iter_mut().zip(&f.psi) {
        *si += p;
    }
    s
}

/// Accelerations of `(φ, ψ)` given the nodal memory convolution `conv`.
pub fn assemble_rhs<T: Real>(
    f: &FieldPair<T>,
    conv: &[T],
    beam: &BeamParams<T>,
    grid: &Grid<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    f.validate(grid)?;
    grid.check(conv)?;
    let s = shear_strain(f, grid);
    let sigma: Vec<T> = s.iter().zip(conv).map(|(&a, &b)| a - b).collect();
    let m = grid.n + 1;
    let mut acc_phi = vec![T::zero(); grid.len()];
    let inv2 = T::one() / (grid.dx + grid.dx);
    let kr1 = beam.kappa / beam.rho1;
    for i in 1..m {
        acc_phi[i] = kr1 * (sigma[i + 1] - sigma[i - 1]) * inv2;
    }
    let lap = d_xx_neumann(&f.psi, grid);
    let (br2, kr2) = (beam.b / beam.rho2, beam.kappa / beam.rho2);
    let acc_psi = lap.iter().zip(&sigma).map(|(&l, &sg)| br2 * l - kr2 * sg).collect();
    Ok((acc_phi, acc_psi))
}

/// Trapezoidal `⟨u, v⟩`.
pub fn inner<T: Real>(u: &[T], v: &[T], grid: &Grid<T>) -> T {
    u.iter().zip(v).enumerate().map(|(i, (&a, &b))| grid.weight(i) * a * b).sum()
}

/// Trapezoidal `‖u‖²`.
pub fn l2_norm_sq<T: Real>(values: &[T], grid: &Grid<T>) -> T {
    inner(values, values, grid)
}

/// `‖ψ_x‖²` from edge differences, the quadratic form behind `d_xx_neumann`.
pub fn grad_norm_sq<T: Real>(psi: &[T], grid: &Grid<T>) -> T {
    psi.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<T>() / grid.dx
}

/// `∫ ψ dx`.
pub fn integral<T: Real>(values: &[T], grid: &Grid<T>) -> T {
    values.iter().enumerate().map(|(i, &v)| grid.weight(i) * v).sum()
}
