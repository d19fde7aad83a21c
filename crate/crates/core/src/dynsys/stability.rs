use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LinearSystem;
use crate::error::Result;
use crate::linalg::{dominant_sym_eigs, LanczosOptions};

/// Largest real part of the generalized eigenvalues of `(E, A)`.
///
/// Dense: needs `n` within the dense cap.
pub fn spectral_abscissa(sys: &LinearSystem) -> Result<f64> {
    Ok(sys.eigenvalues()?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Leading eigenpairs of `G_sym = E^{-1} A + A^T E^{-T}`.
#[derive(Clone, Debug)]
pub struct SymmetricPartSpectrum {
    /// Returned eigenvalues, largest first.
    pub eigenvalues: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    /// Number of returned eigenvalues counted as non-negative.
    pub k: usize,
    /// Largest eigenvalue of `G_sym`.
    pub mu_max: f64,
    /// False when every returned eigenvalue was non-negative, so `k` is only a lower bound.
    pub complete: bool,
}

impl SymmetricPartSpectrum {
    /// Eigenvectors of the non-negative eigenvalues.
    pub fn nonnegative_vectors(&self) -> DMatrix<f64> {
        self.vectors.columns(0, self.k).into_owned()
    }
}

/// Top `ell` eigenpairs of `G_sym` with the non-negative count.
///
/// An eigenvalue counts as non-negative when `mu >= -tau * |mu_1|`, `tau`
/// being the configured relative threshold; over-counting is harmless.
pub fn symmetric_part_spectrum(sys: &LinearSystem, ell: usize) -> Result<SymmetricPartSpectrum> {
    let n = sys.n();
    let tol = sys.tolerances();
    let opts = LanczosOptions { tol: tol.lanczos_rel, dense_cap: tol.dense_cap, ..Default::default() };
    let eig = dominant_sym_eigs(|v: &DVector<f64>| sys.symmetric_part_apply(v), n, ell.min(n), &opts)?;
    let mu_max = eig.values.first().copied().unwrap_or(f64::NEG_INFINITY);
    let threshold = -tol.nonneg_rel * mu_max.abs();
    let k = eig.values.iter().take_while(|&&mu| mu >= threshold).count();
    let complete = eig.values.len() == n || k < eig.values.len();
    Ok(SymmetricPartSpectrum {
        eigenvalues: eig.values,
        vectors: eig.vectors,
        residuals: eig.residuals,
        k,
        mu_max,
        complete,
    })
}

/// All non-negative eigenpairs of `G_sym`: the requested count starts at 64
/// and doubles until a negative eigenvalue shows up.
pub fn detect_nonnegative_part(sys: &LinearSystem) -> Result<SymmetricPartSpectrum> {
    let n = sys.n();
    let mut ell = n.min(64);
    loop {
        let spec = symmetric_part_spectrum(sys, ell)?;
        if spec.complete {
            return Ok(spec);
        }
        log::debug!("all {ell} returned eigenvalues of G_sym are non-negative; doubling");
        ell = (2 * ell).min(n);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `None` when `n` exceeds the dense cap.
    pub spectral_abscissa: Option<f64>,
    pub asymptotically_stable: Option<bool>,
    pub dissipative: bool,
    pub k: usize,
    pub k_complete: bool,
    pub mu_max: f64,
}

pub fn stability_report(sys: &LinearSystem) -> Result<StabilityReport> {
    let alpha = if sys.n() <= sys.tolerances().dense_cap { Some(spectral_abscissa(sys)?) } else { None };
    let spec = detect_nonnegative_part(sys)?;
    Ok(StabilityReport {
        spectral_abscissa: alpha,
        asymptotically_stable: alpha.map(|a| a < 0.0),
        dissipative: spec.k == 0,
        k: spec.k,
        k_complete: spec.complete,
        mu_max: spec.mu_max,
    })
}

pub fn is_asymptotically_stable(sys: &LinearSystem) -> Result<bool> {
    Ok(spectral_abscissa(sys)? < 0.0)
}

/// Largest eigenvalue of `G_sym` strictly negative.
pub fn is_dissipative(sys: &LinearSystem) -> Result<bool> {
    Ok(symmetric_part_spectrum(sys, 1)?.mu_max < 0.0)
}
