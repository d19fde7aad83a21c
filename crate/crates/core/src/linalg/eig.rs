//! Symmetric eigensolvers: dense (all pairs) and thick-restart Lanczos
//! (a few algebraically largest pairs of an implicit operator).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{mgs_orthogonalize, symmetrize, symmetry_defect, Tolerances};
use crate::error::{Error, Result};

/// Eigenpairs sorted by decreasing eigenvalue.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Unit eigenvectors, one per column.
    pub vectors: DMatrix<f64>,
    /// `||A v_i - lambda_i v_i||` for each pair (zero-ish for the dense solver).
    pub residuals: Vec<f64>,
}

impl SymEig {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// All eigenpairs of a symmetric matrix, largest first.
pub fn sym_eig_dense(m: &DMatrix<f64>, tol: &Tolerances) -> Result<SymEig> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!("symmetric eigensolver needs a square matrix, got {}x{}", n, m.ncols())));
    }
    if n > tol.dense_cap {
        return Err(Error::DenseCapExceeded { n, cap: tol.dense_cap });
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let defect = symmetry_defect(m);
    let allowed = tol.symmetry_rel * scale;
    if defect > allowed {
        return Err(Error::SymmetryViolation { defect, tolerance: allowed });
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(SymEig { values, vectors, residuals: vec![0.0; n] })
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    /// Relative residual: converged when `||r_i|| <= tol * (|theta_1| + ||A||_est)`.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov subspace size before a restart; `None` picks `max(2 count + 10, 20)`.
    pub basis_size: Option<usize>,
    pub seed: u64,
    /// Dimension cap for the dense fallback.
    pub dense_cap: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::DEFAULT.lanczos_rel,
            max_restarts: 300,
            basis_size: None,
            seed: 0x5eed,
            dense_cap: Tolerances::DEFAULT.dense_cap,
        }
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let nv = v.norm();
    v / nv
}

/// The `count` algebraically largest eigenpairs of the symmetric operator `op`
/// acting on `R^n`.
///
/// Falls back to assembling the operator densely when the requested count or
/// the Krylov space is not small relative to `n`.
pub fn dominant_sym_eigs<F>(op: F, n: usize, count: usize, opts: &LanczosOptions) -> Result<SymEig>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let count = count.min(n);
    if count == 0 {
        return Ok(SymEig { values: Vec::new(), vectors: DMatrix::zeros(n, 0), residuals: Vec::new() });
    }
    let m = opts.basis_size.unwrap_or((2 * count + 10).max(20)).max(count + 2);
    if 3 * count >= n || m >= n {
        return dense_fallback(&op, n, count, opts);
    }

    let mut found = thick_restart(&op, n, count, m, opts, opts.seed)?;

    // A single start vector cannot see a second copy of a repeated eigenvalue.
    // Probe the complement of the converged subspace from fresh random starts
    // and fold in anything that beats the smallest wanted value.
    for round in 1..=count {
        let locked = found.vectors.clone();
        let project = |x: &DVector<f64>| -> DVector<f64> { x - &locked * locked.tr_mul(x) };
        // Locked directions are pushed far below anything that could matter.
        let sigma = 2.0 * (found.values[0].abs() + found.values[count - 1].abs()) + 1.0;
        let deflated = |x: &DVector<f64>| {
            let px = project(x);
            project(&op(&px)) - (x - &px) * sigma
        };
        let probe_m = (m / 2).max(20).min(n - count - 1);
        if probe_m < 3 {
            break;
        }
        let probe = thick_restart(&deflated, n, 1, probe_m, opts, opts.seed.wrapping_add(round as u64))?;
        let smallest = found.values[count - 1];
        let scale = found.values[0].abs().max(smallest.abs());
        if probe.values[0] <= smallest + opts.tol * scale {
            break;
        }
        let mut q = DMatrix::zeros(n, count + 1);
        q.columns_mut(0, count).copy_from(&found.vectors);
        let mut extra = probe.vectors.column(0).into_owned();
        let nrm = mgs_orthogonalize(&q, count, &mut extra);
        if nrm < 0.5 {
            break;
        }
        q.set_column(count, &(extra / nrm));
        found = rayleigh_ritz(&op, &q, count);
    }
    Ok(found)
}

fn rayleigh_ritz<F>(op: &F, q: &DMatrix<f64>, count: usize) -> SymEig
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut aq = DMatrix::zeros(q.nrows(), q.ncols());
    for j in 0..q.ncols() {
        aq.set_column(j, &op(&q.column(j).into_owned()));
    }
    let mut t = q.tr_mul(&aq);
    symmetrize(&mut t);
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..q.ncols()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let y = DMatrix::from_fn(q.ncols(), count, |i, j| eig.eigenvectors[(i, order[j])]);
    let values: Vec<f64> = order[..count].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = q * &y;
    let aqy = aq * &y;
    let residuals = (0..count).map(|i| (aqy.column(i) - vectors.column(i) * values[i]).norm()).collect();
    SymEig { values, vectors, residuals }
}

fn thick_restart<F>(op: &F, n: usize, count: usize, m: usize, opts: &LanczosOptions, seed: u64) -> Result<SymEig>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v_basis = DMatrix::<f64>::zeros(n, m);
    let mut av_basis = DMatrix::<f64>::zeros(n, m);
    let mut kept = 0usize;
    let mut next = random_unit(n, &mut rng);
    let mut best = f64::INFINITY;

    for restart in 0..=opts.max_restarts {
        for j in kept..m {
            v_basis.set_column(j, &next);
            let w = op(&next);
            if w.len() != n {
                return Err(Error::DimensionMismatch(format!("operator returned length {} for n = {n}", w.len())));
            }
            av_basis.set_column(j, &w);
            let mut r = w;
            let mut beta = mgs_orthogonalize(&v_basis, j + 1, &mut r);
            if beta <= f64::EPSILON * av_basis.column(j).norm().max(f64::MIN_POSITIVE) {
                // Invariant subspace reached; continue with a fresh direction.
                r = random_unit(n, &mut rng);
                beta = mgs_orthogonalize(&v_basis, j + 1, &mut r);
            }
            next = r / beta;
        }

        let mut t = v_basis.tr_mul(&av_basis);
        symmetrize(&mut t);
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let op_est = theta.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));

        let keep = (count + (m - count) / 2).min(m - 1).max(count);
        let y = DMatrix::from_fn(m, keep, |i, j| eig.eigenvectors[(i, order[j])]);
        let vy = &v_basis * &y;
        let avy = &av_basis * &y;
        let residuals: Vec<f64> = (0..count)
            .map(|i| (avy.column(i) - vy.column(i) * theta[i]).norm())
            .collect();
        let threshold = opts.tol * (theta[0].abs() + op_est);
        let worst = residuals.iter().cloned().fold(0.0, f64::max);
        best = best.min(worst);
        log::trace!("lanczos restart {restart}: worst residual {worst:.3e} (threshold {threshold:.3e})");
        if worst <= threshold {
            return Ok(SymEig {
                values: theta[..count].to_vec(),
                vectors: vy.columns(0, count).into_owned(),
                residuals,
            });
        }

        v_basis.columns_mut(0, keep).copy_from(&vy);
        av_basis.columns_mut(0, keep).copy_from(&avy);
        let mut r = next.clone();
        let nr = mgs_orthogonalize(&v_basis, keep, &mut r);
        if nr <= 1e-8 {
            r = random_unit(n, &mut rng);
            let nn = mgs_orthogonalize(&v_basis, keep, &mut r);
            next = r / nn;
        } else {
            next = r / nr;
        }
        kept = keep;
    }
    Err(Error::ConvergenceFailure { what: "Lanczos eigensolver", iterations: opts.max_restarts, best_residual: best })
}

fn dense_fallback<F>(op: &F, n: usize, count: usize, opts: &LanczosOptions) -> Result<SymEig>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if n > opts.dense_cap {
        return Err(Error::DenseCapExceeded { n, cap: opts.dense_cap });
    }
    let mut g = DMatrix::zeros(n, n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        g.set_column(j, &op(&e));
        e[j] = 0.0;
    }
    // The operator is symmetric only up to rounding in whatever solves it wraps.
    symmetrize(&mut g);
    let full = sym_eig_dense(&g, &Tolerances { dense_cap: opts.dense_cap, ..Tolerances::DEFAULT })?;
    Ok(SymEig {
        values: full.values[..count].to_vec(),
        vectors: full.vectors.columns(0, count).into_owned(),
        residuals: vec![0.0; count],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;
    use rand::Rng;

    fn random_sym(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a + a.transpose()
    }

    #[test]
    fn dense_sorted_descending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 5.0, -3.0]));
        let e = sym_eig_dense(&m, &Tolerances::default()).unwrap();
        assert_eq!(e.values, vec![5.0, 1.0, -3.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dense_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eig_dense(&m, &Tolerances::default()), Err(Error::SymmetryViolation { .. })));
    }

    #[test]
    fn lanczos_matches_dense() {
        let n = 300;
        let m = random_sym(n, 11);
        let dense = sym_eig_dense(&m, &Tolerances::default()).unwrap();
        let opts = LanczosOptions { tol: 1e-10, ..Default::default() };
        let got = dominant_sym_eigs(|x| &m * x, n, 5, &opts).unwrap();
        for i in 0..5 {
            assert!((got.values[i] - dense.values[i]).abs() <= 1e-8 * dense.values[0].abs(), "{i}");
        }
        assert!(orthonormality_defect(&got.vectors) < 1e-8);
    }

    #[test]
    fn lanczos_handles_clustered_top() {
        let n = 200;
        let mut d: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();
        d[0] = 10.0;
        d[1] = 10.0;
        d[2] = 9.999;
        let m = DMatrix::from_diagonal(&DVector::from_vec(d));
        let got = dominant_sym_eigs(|x| &m * x, n, 3, &LanczosOptions::default()).unwrap();
        assert!((got.values[0] - 10.0).abs() < 1e-6);
        assert!((got.values[1] - 10.0).abs() < 1e-6);
        assert!((got.values[2] - 9.999).abs() < 1e-6);
    }

    #[test]
    fn small_problem_uses_dense_path() {
        let m = random_sym(12, 2);
        let got = dominant_sym_eigs(|x| &m * x, 12, 5, &LanczosOptions::default()).unwrap();
        let dense = sym_eig_dense(&m, &Tolerances::default()).unwrap();
        assert_eq!(got.values, dense.values[..5].to_vec());
    }
}
