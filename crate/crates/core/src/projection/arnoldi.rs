use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::{BasisMethod, ProjectionBasis};
use crate::dynsys::LinearSystem;
use crate::error::{Error, Result};
use crate::linalg::{lu_factor, mgs_orthogonalize, SparseMatrix};

/// Candidates shrinking below this fraction of their norm under
/// orthogonalization are treated as linearly dependent and dropped.
const DEFLATION: f64 = 1e-10;

/// Orthonormal basis of the (block) Krylov space of `(s0 E - A)^{-1} E`
/// started from `(s0 E - A)^{-1} B`, matching moments of `H` at `s0`.
///
/// Candidates are processed first-in first-out, so the order-`r1` basis is a
/// prefix of the order-`r2` basis. If the recurrence runs out of independent
/// directions the basis is returned at the achieved size with the breakdown
/// flag set.
pub fn arnoldi_basis(sys: &LinearSystem, r: usize, s0: f64) -> Result<ProjectionBasis> {
    let n = sys.n();
    if r == 0 || r > n {
        return Err(Error::InvalidSpec(format!("reduced order must lie in 1..={n}, got {r}")));
    }
    let shifted = SparseMatrix::combine(s0, sys.e(), -1.0, sys.a());
    let lu = lu_factor(&shifted)?;

    let mut queue: VecDeque<DVector<f64>> = VecDeque::new();
    for j in 0..sys.n_in() {
        queue.push_back(lu.solve(&sys.b().column(j).into_owned()));
    }
    let mut v = DMatrix::<f64>::zeros(n, r);
    let mut filled = 0;
    while filled < r {
        let Some(mut cand) = queue.pop_front() else { break };
        let before = cand.norm();
        if before == 0.0 {
            continue;
        }
        let after = mgs_orthogonalize(&v, filled, &mut cand);
        if after <= DEFLATION * before {
            log::debug!("arnoldi: deflating a dependent candidate at order {filled}");
            continue;
        }
        cand /= after;
        v.set_column(filled, &cand);
        filled += 1;
        queue.push_back(lu.solve(&sys.e().mul_vec(&cand)));
    }
    if filled == 0 {
        return Err(Error::InvalidSpec("input matrix B is zero; the Krylov space is empty".into()));
    }
    let breakdown = filled < r;
    let v = if breakdown { v.columns(0, filled).into_owned() } else { v };
    Ok(ProjectionBasis::new(v, BasisMethod::Arnoldi { s0 })?.with_breakdown(breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::galerkin_reduce;
    use crate::dynsys::FrequencyResponse;
    use num_complex::Complex64;

    fn chain(n: usize) -> LinearSystem {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, -2.0 - 0.1 * i as f64));
            if i + 1 < n {
                t.push((i, i + 1, 1.0));
                t.push((i + 1, i, 0.5));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let mut b = DMatrix::zeros(n, 1);
        b[0] = 1.0;
        let mut c = DMatrix::zeros(1, n);
        c[n - 1] = 1.0;
        LinearSystem::standard(a, b, c).unwrap()
    }

    #[test]
    fn order_one_is_normalized_first_solve() {
        let sys = chain(10);
        let basis = arnoldi_basis(&sys, 1, 1.0).unwrap();
        let lu = lu_factor(&SparseMatrix::combine(1.0, sys.e(), -1.0, sys.a())).unwrap();
        let x = lu.solve(&sys.b().column(0).into_owned());
        let x = &x / x.norm();
        assert!((basis.v().column(0) - x).norm() < 1e-14);
    }

    #[test]
    fn matches_moment_at_expansion_point() {
        let sys = chain(30);
        let basis = arnoldi_basis(&sys, 4, 1.0).unwrap();
        let rom = galerkin_reduce(&sys, &basis, None).unwrap();
        let s = Complex64::new(1.0, 0.0);
        let h = FrequencyResponse::eval(&sys, s).unwrap()[(0, 0)];
        let hr = rom.eval(s).unwrap()[(0, 0)];
        assert!((h - hr).norm() <= 1e-8 * h.norm());
    }

    #[test]
    fn invariant_subspace_reports_breakdown() {
        // Decoupled diagonal system: the Krylov space from e_1 is one-dimensional.
        let a = SparseMatrix::from_diagonal(&[-1.0, -2.0, -3.0]);
        let mut b = DMatrix::zeros(3, 1);
        b[0] = 1.0;
        let sys = LinearSystem::standard(a, b, DMatrix::zeros(1, 3)).unwrap();
        let basis = arnoldi_basis(&sys, 3, 1.0).unwrap();
        assert!(basis.breakdown());
        assert_eq!(basis.r(), 1);
    }
}
