//! Dense generalized Lyapunov solver `A^T M E + E^T M A + F = 0`.
//!
//! With `Ahat = E^{-1} A` and `N = E^T M E` the equation becomes
//! `Ahat^T N + N Ahat + F = 0`. A real Schur form `Ahat = Q T Q^T` turns it
//! into a quasi-triangular Sylvester system solved block by block.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::schur::diagonal_blocks;
use crate::linalg::{real_schur, symmetrize, Tolerances};

pub fn solve_lyapunov_dense(a: &DMatrix<f64>, e: &DMatrix<f64>, f: &DMatrix<f64>, tol: &Tolerances) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.shape() != (n, n) || e.shape() != (n, n) || f.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "Lyapunov operands: A {:?}, E {:?}, F {:?}",
            a.shape(),
            e.shape(),
            f.shape()
        )));
    }
    if n > tol.dense_cap {
        return Err(Error::DenseCapExceeded { n, cap: tol.dense_cap });
    }
    let identity = *e == DMatrix::<f64>::identity(n, n);
    let et_lu = if identity { None } else { Some(e.transpose().lu()) };
    let ahat = if identity {
        a.clone()
    } else {
        e.clone().lu().solve(a).ok_or(Error::SingularE)?
    };

    let schur = real_schur(&ahat, tol)?;
    let alpha = schur.spectral_abscissa();
    if alpha >= 0.0 {
        return Err(Error::UnstablePencil { real_part: alpha });
    }
    let q = &schur.q;
    let rhs = -(q.transpose() * f * q);
    let nt = solve_quasi_triangular(&schur.t, &rhs)?;
    let mut big_n = q * nt * q.transpose();
    symmetrize(&mut big_n);

    let mut m = match et_lu {
        None => big_n,
        Some(lu) => {
            let x = lu.solve(&big_n).ok_or(Error::SingularE)?;
            lu.solve(&x.transpose()).ok_or(Error::SingularE)?
        }
    };
    symmetrize(&mut m);
    Ok(m)
}

/// Solve `T^T X + X T = C` for quasi-upper-triangular `T`.
pub(crate) fn solve_quasi_triangular(t: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let blocks = diagonal_blocks(t);
    let tt = t.transpose();
    let mut x = DMatrix::<f64>::zeros(n, n);

    for &(cj, bj) in &blocks {
        // Right-hand side for column block j, minus contributions of earlier columns.
        let mut r = c.columns(cj, bj).into_owned();
        if cj > 0 {
            r -= x.columns(0, cj) * t.view((0, cj), (cj, bj));
        }
        let tjj = t.view((cj, cj), (bj, bj)).into_owned();
        for &(ci, bi) in &blocks {
            let pii = tt.view((ci, ci), (bi, bi)).into_owned();
            let xij = small_sylvester(&pii, &tjj, &r.rows(ci, bi).into_owned())?;
            x.view_mut((ci, cj), (bi, bj)).copy_from(&xij);
            let below = ci + bi;
            if below < n {
                let update = tt.view((below, ci), (n - below, bi)) * &xij;
                let mut rest = r.rows_mut(below, n - below);
                rest -= update;
            }
        }
    }
    Ok(x)
}

/// `P X + X Q = R` for blocks of size at most 2, via the Kronecker form.
fn small_sylvester(p: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (bi, bj) = (p.nrows(), q.nrows());
    let dim = bi * bj;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    // vec(P X) = (I kron P) vec X, vec(X Q) = (Q^T kron I) vec X.
    for col in 0..bj {
        for a in 0..bi {
            for b in 0..bi {
                k[(col * bi + a, col * bi + b)] += p[(a, b)];
            }
        }
    }
    for c1 in 0..bj {
        for c2 in 0..bj {
            for a in 0..bi {
                k[(c1 * bi + a, c2 * bi + a)] += q[(c2, c1)];
            }
        }
    }
    let rhs = DMatrix::from_column_slice(dim, 1, r.as_slice());
    let sol = k.lu().solve(&rhs).ok_or(Error::UnstablePencil { real_part: 0.0 })?;
    Ok(DMatrix::from_column_slice(bi, bj, sol.as_slice()))
}
