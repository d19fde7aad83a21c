use nalgebra::{DMatrix, DVector};

use super::Scalar;
use crate::error::{Error, Result};

/// Compressed sparse column matrix.
///
/// Row indices within each column are strictly increasing; duplicates are
/// summed during assembly.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T = f64> {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            col_ptr: vec![0; ncols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n])
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Assemble from `(row, col, value)` triplets. Duplicate positions are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut counts = vec![0usize; ncols + 1];
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::DimensionMismatch(format!(
                    "triplet ({i}, {j}) outside a {nrows}x{ncols} matrix"
                )));
            }
            counts[j + 1] += 1;
        }
        for j in 0..ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(i, j, v) in triplets {
            let p = next[j];
            rows[p] = i;
            vals[p] = v;
            next[j] += 1;
        }

        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for j in 0..ncols {
            order.clear();
            order.extend(counts[j]..counts[j + 1]);
            order.sort_by_key(|&p| rows[p]);
            for &p in &order {
                if row_idx.len() > col_ptr[j] && *row_idx.last().unwrap() == rows[p] {
                    *values.last_mut().unwrap() += vals[p];
                } else {
                    row_idx.push(rows[p]);
                    values.push(vals[p]);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Entries of column `j` as parallel `(rows, values)` slices.
    pub fn column(&self, j: usize) -> (&[usize], &[T]) {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (rows, vals) = self.column(j);
        match rows.binary_search(&i) {
            Ok(p) => vals[p],
            Err(_) => T::zero(),
        }
    }

    /// Iterate stored entries as `(row, col, value)` in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            let (rows, vals) = self.column(j);
            rows.iter().zip(vals.iter()).map(move |(&i, &v)| (i, j, v))
        })
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<(usize, usize, T)> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t).expect("transpose keeps indices in range")
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> SparseMatrix<U> {
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            col_ptr: self.col_ptr.clone(),
            row_idx: self.row_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `y = self * x` for scalar slices.
    pub fn mul_slice(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols, "sparse matvec dimension mismatch");
        let mut y = vec![T::zero(); self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * xj;
            }
        }
        y
    }

    /// `y = self^T * x` for scalar slices.
    pub fn tr_mul_slice(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows, "sparse matvec dimension mismatch");
        (0..self.ncols)
            .map(|j| {
                let (rows, vals) = self.column(j);
                let mut acc = T::zero();
                for (&i, &v) in rows.iter().zip(vals) {
                    acc += v * x[i];
                }
                acc
            })
            .collect()
    }

    /// Max absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.ncols)
            .map(|j| self.column(j).1.iter().map(|v| v.modulus()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl SparseMatrix<f64> {
    /// Keep exact non-zeros of a dense matrix.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &t).expect("dense indices are in range")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.mul_slice(x.as_slice()))
    }

    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.tr_mul_slice(x.as_slice()))
    }

    /// Sparse times dense.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.ncols, "sparse-dense product dimension mismatch");
        let mut y = DMatrix::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut yc = y.column_mut(c);
            for j in 0..self.ncols {
                let xj = xc[j];
                if xj == 0.0 {
                    continue;
                }
                let (rows, vals) = self.column(j);
                for (&i, &v) in rows.iter().zip(vals) {
                    yc[i] += v * xj;
                }
            }
        }
        y
    }

    /// `self^T * x` for dense `x`.
    pub fn tr_mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.nrows, "sparse-dense product dimension mismatch");
        let mut y = DMatrix::zeros(self.ncols, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            for j in 0..self.ncols {
                let (rows, vals) = self.column(j);
                let mut acc = 0.0;
                for (&i, &v) in rows.iter().zip(vals) {
                    acc += v * xc[i];
                }
                y[(j, c)] = acc;
            }
        }
        y
    }

    /// `alpha * x + beta * y` assembled in scalar type `T` (used for `s E - A`).
    pub fn combine<T: Scalar>(alpha: T, x: &SparseMatrix<f64>, beta: T, y: &SparseMatrix<f64>) -> SparseMatrix<T> {
        assert_eq!((x.nrows, x.ncols), (y.nrows, y.ncols), "combine dimension mismatch");
        let mut t: Vec<(usize, usize, T)> = Vec::with_capacity(x.nnz() + y.nnz());
        t.extend(x.triplets().map(|(i, j, v)| (i, j, alpha * T::from_real(v))));
        t.extend(y.triplets().map(|(i, j, v)| (i, j, beta * T::from_real(v))));
        SparseMatrix::from_triplets(x.nrows, x.ncols, &t).expect("indices already validated")
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn is_identity(&self) -> bool {
        self.is_square()
            && (0..self.ncols).all(|j| {
                let (rows, vals) = self.column(j);
                rows.iter().zip(vals).all(|(&i, &v)| if i == j { v == 1.0 } else { v == 0.0 })
                    && rows.contains(&j)
            })
    }

    pub fn is_diagonal(&self) -> bool {
        self.triplets().all(|(i, j, v)| i == j || v == 0.0)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square() && self.triplets().all(|(i, j, v)| (v - self.get(j, i)).abs() <= tol)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let m = SparseMatrix::from_triplets(3, 2, &[(2, 0, 1.0), (0, 0, 2.0), (2, 0, 3.0), (1, 1, -1.0)]).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(2, 0), 4.0);
        assert_eq!(m.column(0).0, &[0, 2]);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn products_match_dense() {
        let d = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0, -1.0, 0.0, 4.0]);
        let s = SparseMatrix::from_dense(&d);
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(s.mul_dense(&x), &d * &x);
        assert_eq!(s.tr_mul_dense(&x), d.transpose() * &x);
        assert_eq!(s.transpose().to_dense(), d.transpose());
    }

    #[test]
    fn identity_detection() {
        assert!(SparseMatrix::<f64>::identity(4).is_identity());
        assert!(!SparseMatrix::from_diagonal(&[1.0, 2.0]).is_identity());
    }
}
