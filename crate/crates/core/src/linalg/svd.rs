use nalgebra::{DMatrix, DVector};

use super::eig::{dominant_sym_eigs, LanczosOptions};
use super::qr::householder_qr;
use super::Tolerances;
use crate::error::Result;

/// Leading left singular vectors and singular values (descending).
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub left: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

/// Largest side handled by the QR-then-dense path.
const DENSE_SIDE: usize = 1000;

/// The `rank` leading singular triplets (left side only) of `m`.
///
/// When the short side is at most 1000 the matrix is first compressed by a
/// Householder QR of its tall orientation and the small triangular factor is
/// decomposed densely. Otherwise the Gram operator `m m^T` is handed to
/// Lanczos, which squares the condition number but never forms an `n x n`
/// matrix.
pub fn thin_svd(m: &DMatrix<f64>, rank: usize, tol: &Tolerances) -> Result<ThinSvd> {
    let (n, s) = m.shape();
    let rank = rank.min(n).min(s);
    if rank == 0 {
        return Ok(ThinSvd { left: DMatrix::zeros(n, 0), singular_values: Vec::new() });
    }
    if n.min(s) <= DENSE_SIDE {
        return Ok(dense_path(m, rank));
    }

    let opts = LanczosOptions { tol: tol.lanczos_rel, dense_cap: tol.dense_cap, ..Default::default() };
    let eig = dominant_sym_eigs(
        |x: &DVector<f64>| {
            let y = m.tr_mul(x);
            m * y
        },
        n,
        rank,
        &opts,
    )?;
    Ok(ThinSvd {
        left: eig.vectors,
        singular_values: eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect(),
    })
}

fn dense_path(m: &DMatrix<f64>, rank: usize) -> ThinSvd {
    let (n, s) = m.shape();
    let (left_small, sigma) = if n >= s {
        let qr = householder_qr(m);
        let svd = qr.r().clone().svd(true, false);
        let (u, sig) = sorted(svd.u.expect("requested U"), svd.singular_values);
        let mut left = DMatrix::zeros(n, rank);
        for j in 0..rank {
            let mut col = DVector::zeros(n);
            col.rows_mut(0, s).copy_from(&u.column(j));
            qr.apply_q(&mut col);
            left.set_column(j, &col);
        }
        (left, sig)
    } else {
        // m = R^T Q^T with m^T = Q R, so the left vectors are those of R^T.
        let qr = householder_qr(&m.transpose());
        let svd = qr.r().transpose().svd(true, false);
        let (u, sig) = sorted(svd.u.expect("requested U"), svd.singular_values);
        (u.columns(0, rank).into_owned(), sig)
    };
    ThinSvd { left: left_small, singular_values: sigma[..rank].to_vec() }
}

fn sorted(u: DMatrix<f64>, sigma: DVector<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let u2 = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    (u2, order.iter().map(|&i| sigma[i]).collect())
}
