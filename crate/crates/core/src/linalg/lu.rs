//! Left-looking sparse LU with threshold partial pivoting.
//!
//! Columns are pre-ordered by reverse Cuthill-McKee on the pattern of
//! `M + M^T`; the pivot search prefers the matching diagonal entry, so banded
//! systems (chains, 1D discretizations) keep their band through elimination.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::{Scalar, SparseMatrix};
use crate::error::{Error, Result};

/// A diagonal candidate is kept when it is at least this fraction of the column maximum.
const DIAGONAL_PREFERENCE: f64 = 0.1;

/// `P M Q = L U` with unit-lower `L` and upper `U`.
#[derive(Clone, Debug)]
pub struct LuFactorization<T = f64> {
    n: usize,
    /// Column order: step `k` eliminates original column `q[k]`.
    q: Vec<usize>,
    /// Original row `i` became pivot row `pinv[i]`.
    pinv: Vec<usize>,
    /// Strictly lower part, column-wise, rows in pivot numbering.
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<T>,
    /// Upper part, column-wise, rows in pivot numbering, diagonal stored last.
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<T>,
}

/// Factor a square sparse matrix.
pub fn lu_factor<T: Scalar>(m: &SparseMatrix<T>) -> Result<LuFactorization<T>> {
    LuFactorization::new(m)
}

impl<T: Scalar> LuFactorization<T> {
    pub fn new(m: &SparseMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let q = rcm_order(m);

        const NONE: usize = usize::MAX;
        let mut pinv = vec![NONE; n];
        // L is built with original row indices and renumbered at the end.
        let mut l_ptr = vec![0usize; n + 1];
        let mut l_idx: Vec<usize> = Vec::new();
        let mut l_val: Vec<T> = Vec::new();
        let mut u_ptr = vec![0usize; n + 1];
        let mut u_idx: Vec<usize> = Vec::new();
        let mut u_val: Vec<T> = Vec::new();

        let mut x = vec![T::zero(); n];
        let mut mark = vec![usize::MAX; n];
        let mut topo: Vec<usize> = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for k in 0..n {
            let col = q[k];
            let (rows, vals) = m.column(col);
            let col_norm: f64 = vals.iter().map(|v| v.modulus()).sum();

            // Reach of the column pattern in the graph of the partial L, in
            // topological order (reverse postorder of a depth-first search).
            topo.clear();
            for &start in rows {
                if mark[start] == k {
                    continue;
                }
                mark[start] = k;
                stack.push((start, 0));
                while let Some(&(node, pos)) = stack.last() {
                    let jl = pinv[node];
                    let mut next = pos;
                    let mut child = None;
                    if jl != NONE {
                        let (begin, end) = (l_ptr[jl], l_ptr[jl + 1]);
                        while begin + next < end {
                            let c = l_idx[begin + next];
                            next += 1;
                            if mark[c] != k {
                                child = Some(c);
                                break;
                            }
                        }
                    }
                    if let Some(top) = stack.last_mut() {
                        top.1 = next;
                    }
                    match child {
                        Some(c) => {
                            mark[c] = k;
                            stack.push((c, 0));
                        }
                        None => {
                            topo.push(node);
                            stack.pop();
                        }
                    }
                }
            }
            topo.reverse();

            for &i in &topo {
                x[i] = T::zero();
            }
            for (&i, &v) in rows.iter().zip(vals) {
                x[i] = v;
            }
            for &i in &topo {
                let jl = pinv[i];
                if jl == NONE {
                    continue;
                }
                let xi = x[i];
                if xi == T::zero() {
                    continue;
                }
                for p in l_ptr[jl]..l_ptr[jl + 1] {
                    let r = l_idx[p];
                    let lv = l_val[p];
                    x[r] -= lv * xi;
                }
            }

            // Split into U entries (already pivoted rows) and pivot candidates.
            let mut best = NONE;
            let mut best_abs = -1.0;
            for &i in &topo {
                if pinv[i] == NONE {
                    let a = x[i].modulus();
                    if a > best_abs {
                        best_abs = a;
                        best = i;
                    }
                } else {
                    u_idx.push(pinv[i]);
                    u_val.push(x[i]);
                }
            }
            let singular_below = (n as f64) * f64::EPSILON * col_norm;
            if best == NONE || best_abs <= singular_below || best_abs == 0.0 {
                return Err(Error::SingularMatrix { step: k });
            }
            if pinv[col] == NONE && mark[col] == k && x[col].modulus() >= DIAGONAL_PREFERENCE * best_abs {
                best = col;
            }
            let pivot = x[best];
            pinv[best] = k;
            u_idx.push(k);
            u_val.push(pivot);
            u_ptr[k + 1] = u_idx.len();

            for &i in &topo {
                if pinv[i] == NONE {
                    let v = x[i] / pivot;
                    if v != T::zero() {
                        l_idx.push(i);
                        l_val.push(v);
                    }
                }
            }
            l_ptr[k + 1] = l_idx.len();
        }

        for r in l_idx.iter_mut() {
            *r = pinv[*r];
        }

        Ok(Self {
            n,
            q,
            pinv,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fill_nnz(&self) -> usize {
        self.l_val.len() + self.u_val.len()
    }

    fn u_diag(&self, k: usize) -> T {
        self.u_val[self.u_ptr[k + 1] - 1]
    }

    /// Ratio of the largest to the smallest pivot modulus; a cheap lower
    /// bound on the condition number used as a pole-proximity guard.
    pub fn pivot_ratio(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for k in 0..self.n {
            let a = self.u_diag(k).modulus();
            lo = lo.min(a);
            hi = hi.max(a);
        }
        if self.n == 0 {
            1.0
        } else {
            hi / lo
        }
    }

    /// Solve `M x = b`.
    pub fn solve_slice(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n, "LU solve dimension mismatch");
        let mut y = vec![T::zero(); self.n];
        for (i, &bi) in b.iter().enumerate() {
            y[self.pinv[i]] = bi;
        }
        for k in 0..self.n {
            let yk = y[k];
            if yk == T::zero() {
                continue;
            }
            for p in self.l_ptr[k]..self.l_ptr[k + 1] {
                let r = self.l_idx[p];
                let lv = self.l_val[p];
                y[r] -= lv * yk;
            }
        }
        for k in (0..self.n).rev() {
            let last = self.u_ptr[k + 1] - 1;
            y[k] = y[k] / self.u_val[last];
            let yk = y[k];
            for p in self.u_ptr[k]..last {
                let r = self.u_idx[p];
                let uv = self.u_val[p];
                y[r] -= uv * yk;
            }
        }
        let mut x = vec![T::zero(); self.n];
        for k in 0..self.n {
            x[self.q[k]] = y[k];
        }
        x
    }

    /// Solve `M^T x = b` (plain transpose, no conjugation).
    pub fn solve_transpose_slice(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n, "LU solve dimension mismatch");
        let mut w: Vec<T> = (0..self.n).map(|k| b[self.q[k]]).collect();
        for k in 0..self.n {
            let last = self.u_ptr[k + 1] - 1;
            let mut acc = w[k];
            for p in self.u_ptr[k]..last {
                let uv = self.u_val[p];
                acc -= uv * w[self.u_idx[p]];
            }
            w[k] = acc / self.u_val[last];
        }
        for k in (0..self.n).rev() {
            let mut acc = w[k];
            for p in self.l_ptr[k]..self.l_ptr[k + 1] {
                let lv = self.l_val[p];
                acc -= lv * w[self.l_idx[p]];
            }
            w[k] = acc;
        }
        (0..self.n).map(|i| w[self.pinv[i]]).collect()
    }
}

impl LuFactorization<f64> {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.solve_slice(b.as_slice()))
    }

    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.solve_transpose_slice(b.as_slice()))
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let x = self.solve_slice(b.column(j).as_slice());
            out.column_mut(j).copy_from_slice(&x);
        }
        out
    }

    pub fn solve_transpose_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let x = self.solve_transpose_slice(b.column(j).as_slice());
            out.column_mut(j).copy_from_slice(&x);
        }
        out
    }
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern.
fn rcm_order<T: Scalar>(m: &SparseMatrix<T>) -> Vec<usize> {
    let n = m.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for &i in m.column(j).0 {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let root = pseudo_peripheral(seed, &adj, &degree);
        visited[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// A few rounds of the George-Liu heuristic: restart from the farthest,
/// lowest-degree node of the last BFS level.
fn pseudo_peripheral(start: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut root = start;
    let mut depth = 0usize;
    let mut dist = vec![usize::MAX; adj.len()];
    for _ in 0..4 {
        let mut touched = vec![root];
        dist[root] = 0;
        let mut queue = VecDeque::from([root]);
        let mut last = root;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    touched.push(w);
                    queue.push_back(w);
                    let better = dist[w] > dist[last] || (dist[w] == dist[last] && degree[w] < degree[last]);
                    if better {
                        last = w;
                    }
                }
            }
        }
        let ecc = dist[last];
        for &v in &touched {
            dist[v] = usize::MAX;
        }
        if ecc <= depth {
            break;
        }
        depth = ecc;
        root = last;
    }
    root
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_solve() {
        let lu = lu_factor(&SparseMatrix::<f64>::identity(3)).unwrap();
        assert_eq!(lu.solve_slice(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn diagonal_solve() {
        let lu = lu_factor(&SparseMatrix::from_diagonal(&[2.0, 4.0])).unwrap();
        assert_eq!(lu.solve_slice(&[2.0, 4.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn random_well_conditioned_recovers_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let mut d = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        for i in 0..n {
            d[(i, i)] += n as f64;
        }
        let x_true = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let b = &d * &x_true;
        let lu = lu_factor(&SparseMatrix::from_dense(&d)).unwrap();
        assert!((lu.solve(&b) - &x_true).amax() <= 1e-10);
        let bt = d.transpose() * &x_true;
        assert!((lu.solve_transpose(&bt) - &x_true).amax() <= 1e-10);
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 1.0]);
        let lu = lu_factor(&SparseMatrix::from_dense(&d)).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert!((lu.solve(&(&d * &x)) - &x).amax() < 1e-14);
        assert!((lu.solve_transpose(&(d.transpose() * &x)) - &x).amax() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            lu_factor(&SparseMatrix::from_dense(&d)),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn complex_solve_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 12;
        let d = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { 4.0 } else { 0.0 };
            Complex64::new(rng.random_range(-1.0..1.0) + diag, rng.random_range(-1.0..1.0))
        });
        let triplets: Vec<_> = (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).map(|(i, j)| (i, j, d[(i, j)])).collect();
        let s = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
        let lu = lu_factor(&s).unwrap();
        let x: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let b = s.mul_slice(&x);
        for (a, e) in lu.solve_slice(&b).iter().zip(&x) {
            assert!((a - e).norm() < 1e-12);
        }
        let bt = s.tr_mul_slice(&x);
        for (a, e) in lu.solve_transpose_slice(&bt).iter().zip(&x) {
            assert!((a - e).norm() < 1e-12);
        }
    }

    #[test]
    fn tridiagonal_fill_stays_banded() {
        let n = 500;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let lu = lu_factor(&SparseMatrix::from_triplets(n, n, &t).unwrap()).unwrap();
        assert!(lu.fill_nnz() <= 3 * n);
    }
}
