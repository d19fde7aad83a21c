use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{householder_qr, sym_eig_dense, HouseholderQr, Tolerances};

/// Square root of `M = I + Z Z^T` applied in `O(n q)` per vector.
///
/// With `Z = Q [R'; 0]` and `R' R'^T = S D S^T`,
/// `M^{±1/2} = Q diag(S (I + D)^{±1/2} S^T, I) Q^T`.
#[derive(Clone, Debug)]
pub struct MatrixSqrt {
    qr: Option<HouseholderQr>,
    s: DMatrix<f64>,
    d: Vec<f64>,
}

impl MatrixSqrt {
    pub fn new(z: &DMatrix<f64>) -> Result<Self> {
        let (n, q) = z.shape();
        if q > n {
            return Err(Error::DimensionMismatch(format!("factor has {q} columns but only {n} rows")));
        }
        if q == 0 {
            return Ok(Self { qr: None, s: DMatrix::zeros(0, 0), d: Vec::new() });
        }
        let qr = householder_qr(z);
        let r = qr.r();
        let eig = sym_eig_dense(&(r * r.transpose()), &Tolerances { symmetry_rel: 1e-10, ..Tolerances::DEFAULT })?;
        // R' R'^T is positive semidefinite; clip rounding noise.
        let d = eig.values.iter().map(|&x| x.max(0.0)).collect();
        Ok(Self { qr: Some(qr), s: eig.vectors, d })
    }

    pub fn dim(&self) -> Option<usize> {
        self.qr.as_ref().map(|q| q.nrows())
    }

    fn apply_power(&self, v: &DVector<f64>, sign: f64) -> DVector<f64> {
        let Some(qr) = &self.qr else { return v.clone() };
        let q = self.d.len();
        let mut w = v.clone();
        qr.apply_qt(&mut w);
        let top = w.rows(0, q).into_owned();
        let mut t = self.s.tr_mul(&top);
        for (ti, &di) in t.iter_mut().zip(&self.d) {
            *ti *= (1.0 + di).powf(0.5 * sign);
        }
        w.rows_mut(0, q).copy_from(&(&self.s * t));
        qr.apply_q(&mut w);
        w
    }

    /// `M^{1/2} v`
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_power(v, 1.0)
    }

    /// `M^{-1/2} v`
    pub fn apply_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_power(v, -1.0)
    }
}
