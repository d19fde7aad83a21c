//! Dense and sparse kernels shared by the reduction pipeline.
//!
//! Dense storage is [`nalgebra::DMatrix`] (column-major). Sparse storage is the
//! compressed-column [`SparseMatrix`], generic over real and complex scalars so
//! that the same LU code factors `E`, `s0 E - A` and `i w E - A`.

mod eig;
pub mod mtx;
mod lu;
mod qr;
pub(crate) mod schur;
mod sparse;
mod svd;

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use eig::{dominant_sym_eigs, sym_eig_dense, LanczosOptions, SymEig};
pub use lu::{lu_factor, LuFactorization};
pub use qr::{householder_qr, HouseholderQr};
pub use schur::{real_schur, schur_eigenvalues, RealSchur};
pub use sparse::SparseMatrix;
pub use svd::{thin_svd, ThinSvd};

pub type DenseMatrix = DMatrix<f64>;

/// Every numerical threshold used by the library, in one place.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative symmetry defect accepted by the dense symmetric eigensolver.
    pub symmetry_rel: f64,
    /// Largest dimension handled by O(n^3) dense kernels.
    pub dense_cap: usize,
    /// Relative Ritz residual accepted by the Lanczos solver.
    pub lanczos_rel: f64,
    /// Eigenvalues `mu >= -nonneg_rel * |mu_1|` of the symmetric part count as non-negative.
    pub nonneg_rel: f64,
    /// Accepted defect `||Q^T Q - I||` for orthonormal factors.
    pub orthonormality: f64,
    /// Singular values below `rank_rel * sigma_1` are treated as zero.
    pub rank_rel: f64,
    /// Iteration cap for the QR algorithm, per eigenvalue.
    pub qr_iterations_per_eig: usize,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        symmetry_rel: 1e-12,
        dense_cap: 2000,
        lanczos_rel: 1e-8,
        nonneg_rel: 1e-12,
        orthonormality: 1e-10,
        rank_rel: 1e-14,
        qr_iterations_per_eig: 60,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Field operations needed by the sparse kernels.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_real(x: f64) -> Self;
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// `||Q^T Q - I||_max` for a matrix with (supposedly) orthonormal columns.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.tr_mul(q);
    let mut worst: f64 = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Largest absolute entry of `m - m^T`.
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Spectral norm of a dense matrix via the eigenvalues of the smaller Gram matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = if m.nrows() >= m.ncols() { m.tr_mul(m) } else { m * m.transpose() };
    let eig = nalgebra::SymmetricEigen::new(gram);
    eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt()
}

/// Modified Gram-Schmidt with one reorthogonalization pass against the first
/// `cols` columns of `basis`. Returns the norm of `v` after orthogonalization.
pub(crate) fn mgs_orthogonalize(basis: &DMatrix<f64>, cols: usize, v: &mut DVector<f64>) -> f64 {
    for _pass in 0..2 {
        for j in 0..cols {
            let col = basis.column(j);
            let h = col.dot(v);
            v.axpy(-h, &col, 1.0);
        }
    }
    v.norm()
}
