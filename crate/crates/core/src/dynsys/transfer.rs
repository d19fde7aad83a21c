use nalgebra::DMatrix;
use num_complex::Complex64;

use super::LinearSystem;
use crate::error::{Error, Result};
use crate::linalg::{lu_factor, SparseMatrix};

/// Anything with a transfer function `H(s)`.
pub trait FrequencyResponse: Sync {
    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;
    /// `H(s)` as an `n_out x n_in` complex matrix.
    fn eval(&self, s: Complex64) -> Result<DMatrix<Complex64>>;
    /// Poles, when they can be computed at reasonable cost.
    fn poles(&self) -> Result<Option<Vec<Complex64>>>;
}

/// `H(s) = C (s E - A)^{-1} B` evaluated through a fresh factorization of
/// `s E - A` per point.
pub struct TransferFunction<'a> {
    sys: &'a LinearSystem,
    dense: bool,
}

/// Above this fill ratio (and below the dense cap) a dense complex LU is cheaper.
const DENSE_FILL: f64 = 0.05;

impl<'a> TransferFunction<'a> {
    pub fn new(sys: &'a LinearSystem) -> Self {
        let n = sys.n().max(1);
        let fill = (sys.a().nnz() + sys.e().nnz()) as f64 / (n * n) as f64;
        let dense = fill > DENSE_FILL && sys.n() <= 1000;
        Self { sys, dense }
    }

    pub fn system(&self) -> &LinearSystem {
        self.sys
    }

    pub fn eval(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        let pole = || Error::PoleHit { re: s.re, im: s.im };
        let sys = self.sys;
        let n = sys.n();
        let b = sys.b().map(|v| Complex64::new(v, 0.0));
        let x = if self.dense {
            let mut m = DMatrix::<Complex64>::zeros(n, n);
            for (i, j, v) in sys.e().triplets() {
                m[(i, j)] += s * v;
            }
            for (i, j, v) in sys.a().triplets() {
                m[(i, j)] -= Complex64::new(v, 0.0);
            }
            let lu = m.lu();
            let u = lu.u();
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for k in 0..n {
                let d = u[(k, k)].norm();
                lo = lo.min(d);
                hi = hi.max(d);
            }
            if n > 0 && (lo == 0.0 || hi / lo > 1.0 / f64::EPSILON) {
                return Err(pole());
            }
            lu.solve(&b).ok_or_else(pole)?
        } else {
            let pencil = SparseMatrix::combine(s, sys.e(), Complex64::new(-1.0, 0.0), sys.a());
            let lu = match lu_factor(&pencil) {
                Ok(lu) => lu,
                Err(Error::SingularMatrix { .. }) => return Err(pole()),
                Err(e) => return Err(e),
            };
            if lu.pivot_ratio() > 1.0 / f64::EPSILON {
                return Err(pole());
            }
            let mut x = DMatrix::<Complex64>::zeros(n, b.ncols());
            for j in 0..b.ncols() {
                let col = lu.solve_slice(b.column(j).as_slice());
                x.column_mut(j).copy_from_slice(&col);
            }
            x
        };
        let c = sys.c().map(|v| Complex64::new(v, 0.0));
        Ok(c * x)
    }
}

impl LinearSystem {
    pub fn transfer_function(&self) -> TransferFunction<'_> {
        TransferFunction::new(self)
    }
}

impl FrequencyResponse for LinearSystem {
    fn n_in(&self) -> usize {
        LinearSystem::n_in(self)
    }

    fn n_out(&self) -> usize {
        LinearSystem::n_out(self)
    }

    fn eval(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        self.transfer_function().eval(s)
    }

    fn poles(&self) -> Result<Option<Vec<Complex64>>> {
        if self.n() > self.tolerances().dense_cap {
            return Ok(None);
        }
        Ok(Some(self.eigenvalues()?.to_vec()))
    }
}
