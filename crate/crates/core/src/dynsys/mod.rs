//! Linear descriptor systems `E x' = A x + B u`, `y = C x`.

mod bundle;
mod stability;
mod transfer;

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{lu_factor, LuFactorization, SparseMatrix, Tolerances};

pub use bundle::{load_bundle, save_bundle, BundleManifest};
pub use stability::{
    detect_nonnegative_part, is_asymptotically_stable, is_dissipative, spectral_abscissa, stability_report,
    symmetric_part_spectrum, StabilityReport, SymmetricPartSpectrum,
};
pub use transfer::{FrequencyResponse, TransferFunction};

/// Full-order model with sparse `E`, `A` and dense `B`, `C`.
///
/// `E` is factored once at construction; the factorization is shared between
/// clones.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    e: SparseMatrix,
    a: SparseMatrix,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    e_lu: Arc<LuFactorization<f64>>,
    e_identity: bool,
    tol: Tolerances,
    eigenvalues: Arc<OnceLock<Vec<Complex64>>>,
}

impl LinearSystem {
    pub fn new(e: SparseMatrix, a: SparseMatrix, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || e.nrows() != n || e.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "E is {}x{} and A is {}x{}",
                e.nrows(),
                e.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch(format!("C has {} columns, expected {n}", c.ncols())));
        }
        if !e.all_finite() || !a.all_finite() || b.iter().any(|v| !v.is_finite()) || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("system matrices contain non-finite entries".into()));
        }
        let e_identity = e.is_identity();
        let e_lu = match lu_factor(&e) {
            Ok(lu) => lu,
            Err(Error::SingularMatrix { .. }) => return Err(Error::SingularE),
            Err(other) => return Err(other),
        };
        Ok(Self {
            e,
            a,
            b,
            c,
            e_lu: Arc::new(e_lu),
            e_identity,
            tol: Tolerances::default(),
            eigenvalues: Arc::new(OnceLock::new()),
        })
    }

    /// Standard state-space system (`E = I`).
    pub fn standard(a: SparseMatrix, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        Self::new(SparseMatrix::identity(n), a, b, c)
    }

    pub fn from_dense(e: &DMatrix<f64>, a: &DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        Self::new(SparseMatrix::from_dense(e), SparseMatrix::from_dense(a), b, c)
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn e(&self) -> &SparseMatrix {
        &self.e
    }

    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.c.nrows()
    }

    /// True unless `E` is exactly the identity.
    pub fn is_descriptor(&self) -> bool {
        !self.e_identity
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn e_factorization(&self) -> &Arc<LuFactorization<f64>> {
        &self.e_lu
    }

    /// `E^{-1} v`
    pub fn e_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.e_identity {
            v.clone()
        } else {
            self.e_lu.solve(v)
        }
    }

    /// `E^{-T} v`
    pub fn e_solve_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.e_identity {
            v.clone()
        } else {
            self.e_lu.solve_transpose(v)
        }
    }

    pub fn e_solve_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.e_identity {
            m.clone()
        } else {
            self.e_lu.solve_matrix(m)
        }
    }

    pub fn e_solve_transpose_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.e_identity {
            m.clone()
        } else {
            self.e_lu.solve_transpose_matrix(m)
        }
    }

    /// Symmetric part `G_sym v = E^{-1} A v + A^T E^{-T} v`.
    pub fn symmetric_part_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let left = self.e_solve(&self.a.mul_vec(v));
        let right = self.a.tr_mul_vec(&self.e_solve_transpose(v));
        left + right
    }

    /// Dense `E^{-1} A` (subject to the dense cap).
    pub fn e_inv_a_dense(&self) -> Result<DMatrix<f64>> {
        self.check_dense_cap()?;
        Ok(self.e_solve_matrix(&self.a.to_dense()))
    }

    /// Dense `G_sym` (subject to the dense cap).
    pub fn symmetric_part_dense(&self) -> Result<DMatrix<f64>> {
        let m = self.e_inv_a_dense()?;
        Ok(&m + m.transpose())
    }

    pub(crate) fn check_dense_cap(&self) -> Result<()> {
        if self.n() > self.tol.dense_cap {
            Err(Error::DenseCapExceeded { n: self.n(), cap: self.tol.dense_cap })
        } else {
            Ok(())
        }
    }

    /// Generalized eigenvalues of `(E, A)`, computed once per system.
    pub fn eigenvalues(&self) -> Result<&[Complex64]> {
        if let Some(ev) = self.eigenvalues.get() {
            return Ok(ev);
        }
        let m = self.e_inv_a_dense()?;
        let schur = crate::linalg::real_schur(&m, &self.tol)?;
        Ok(self.eigenvalues.get_or_init(|| schur.eigenvalues))
    }
}
