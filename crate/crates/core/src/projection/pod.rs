use nalgebra::DMatrix;

use super::{BasisMethod, ProjectionBasis};
use crate::error::{Error, Result};
use crate::linalg::{thin_svd, Tolerances};

/// The `r` dominant left singular vectors of a snapshot matrix.
///
/// For repeated singular values the basis is not unique; the solver's
/// ordering is kept.
pub fn pod_basis(snapshots: &DMatrix<f64>, r: usize) -> Result<ProjectionBasis> {
    let (n, s) = snapshots.shape();
    if r == 0 || r > n.min(s) {
        return Err(Error::InvalidSpec(format!("POD order must lie in 1..={}, got {r}", n.min(s))));
    }
    let tol = Tolerances::default();
    let svd = thin_svd(snapshots, r, &tol)?;
    let sigma = &svd.singular_values;
    let ratio = if sigma[0] > 0.0 { sigma[r - 1] / sigma[0] } else { 0.0 };
    if ratio <= tol.rank_rel {
        return Err(Error::RankDeficient { ratio });
    }
    ProjectionBasis::new(svd.left, BasisMethod::Pod { singular_values: sigma.clone() })
}
