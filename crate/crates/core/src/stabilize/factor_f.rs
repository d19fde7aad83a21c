use nalgebra::DMatrix;

use crate::dynsys::{detect_nonnegative_part, LinearSystem};
use crate::error::{Error, Result};

/// Low-rank correction that makes `F = -G_sym + Ut Ut^T` positive definite.
#[derive(Clone, Debug)]
pub struct StabRhsFactor {
    /// Eigenvectors of the non-negative eigenvalues of `G_sym`.
    pub u: DMatrix<f64>,
    /// `sqrt(mu_max + delta_eff) * u`
    pub u_tilde: DMatrix<f64>,
    pub k: usize,
    pub mu_max: f64,
    pub delta: f64,
    /// `delta` inflated by the largest eigen-residual of the returned pairs.
    pub delta_eff: f64,
    /// The eigenvalues returned by the eigensolver, largest first.
    pub eigenvalues: Vec<f64>,
}

pub fn build_stab_factor_f(sys: &LinearSystem, delta: f64) -> Result<StabRhsFactor> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidSpec(format!("delta must be positive, got {delta}")));
    }
    let spec = detect_nonnegative_part(sys)?;
    if spec.k == 0 {
        return Err(Error::AlreadyDissipative);
    }
    let worst_residual = spec.residuals[..spec.k].iter().cloned().fold(0.0, f64::max);
    let delta_eff = delta + worst_residual;
    let u = spec.nonnegative_vectors();
    let u_tilde = &u * (spec.mu_max + delta_eff).sqrt();
    Ok(StabRhsFactor {
        u,
        u_tilde,
        k: spec.k,
        mu_max: spec.mu_max,
        delta,
        delta_eff,
        eigenvalues: spec.eigenvalues,
    })
}

/// Dense `F = -G_sym + Ut Ut^T`.
pub fn stab_rhs_dense(sys: &LinearSystem, factor: &StabRhsFactor) -> Result<DMatrix<f64>> {
    let g = sys.symmetric_part_dense()?;
    Ok(-g + &factor.u_tilde * factor.u_tilde.transpose())
}
