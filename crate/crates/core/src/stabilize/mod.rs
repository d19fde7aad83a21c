//! Stability-preserving test spaces `W = M E V` with `M ~ E^{-T} E^{-1} + Z Z^T`.

mod adi;
mod factor_f;
mod lyapunov;
mod sqrt;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynsys::LinearSystem;
use crate::error::{Error, Result};
use crate::linalg::{dominant_sym_eigs, mtx, spectral_norm, sym_eig_dense, LanczosOptions, LuFactorization};
use crate::projection::{ProjectionBasis, Provenance, ReducedSystem, WSource};

pub use adi::{penzl_shifts, solve_lyapunov_lradi, AdiOptions, AdiResult};
pub use factor_f::{build_stab_factor_f, stab_rhs_dense, StabRhsFactor};
pub use lyapunov::solve_lyapunov_dense;
pub use sqrt::MatrixSqrt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovMode {
    /// Low-rank ADI unless `k / n` exceeds the configured ratio.
    Auto,
    Dense,
    LowRankAdi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizerConfig {
    pub delta: f64,
    pub mode: LyapunovMode,
    pub adi: AdiOptions,
    /// Above this `k / n` the low-rank solver is refused in `Auto` mode.
    pub max_k_ratio: f64,
}

impl Default for StabilizerConfig {
    fn default() -> Self {
        Self { delta: 1.0, mode: LyapunovMode::Auto, adi: AdiOptions::default(), max_k_ratio: 0.05 }
    }
}

/// Factored `M = E^{-T} E^{-1} + Z Z^T`, never formed explicitly.
#[derive(Clone, Debug)]
pub struct StabilizerFactor {
    z: DMatrix<f64>,
    u_tilde: DMatrix<f64>,
    e_lu: Arc<LuFactorization<f64>>,
    e_identity: bool,
    manifest: StabilizerManifest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizerManifest {
    pub delta: f64,
    pub delta_eff: f64,
    pub k: usize,
    pub mu_max: f64,
    pub q: usize,
    pub mode: LyapunovMode,
    pub adi_steps: usize,
    pub residual_history: Vec<f64>,
}

impl StabilizerFactor {
    /// `M = E^{-T} E^{-1} + Z Z^T` for a given factor `Z`.
    pub fn from_factor(sys: &LinearSystem, z: DMatrix<f64>) -> Result<Self> {
        if z.nrows() != sys.n() {
            return Err(Error::DimensionMismatch(format!("Z has {} rows, n = {}", z.nrows(), sys.n())));
        }
        let manifest = StabilizerManifest {
            delta: 0.0,
            delta_eff: 0.0,
            k: 0,
            mu_max: f64::NAN,
            q: z.ncols(),
            mode: LyapunovMode::Dense,
            adi_steps: 0,
            residual_history: Vec::new(),
        };
        Ok(Self {
            z,
            u_tilde: DMatrix::zeros(sys.n(), 0),
            e_lu: sys.e_factorization().clone(),
            e_identity: !sys.is_descriptor(),
            manifest,
        })
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn u_tilde(&self) -> &DMatrix<f64> {
        &self.u_tilde
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    pub fn k(&self) -> usize {
        self.manifest.k
    }

    pub fn manifest(&self) -> &StabilizerManifest {
        &self.manifest
    }

    pub fn mass_is_identity(&self) -> bool {
        self.e_identity
    }

    fn e_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.e_identity {
            v.clone()
        } else {
            self.e_lu.solve(v)
        }
    }

    fn e_solve_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.e_identity {
            v.clone()
        } else {
            self.e_lu.solve_transpose(v)
        }
    }

    /// `M v`
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let base = self.e_solve_transpose(&self.e_solve(v));
        if self.q() == 0 {
            base
        } else {
            base + &self.z * self.z.tr_mul(v)
        }
    }

    /// `M X`
    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for j in 0..x.ncols() {
            out.set_column(j, &self.apply(&x.column(j).into_owned()));
        }
        out
    }

    /// Write `Z.mtx`, `U.mtx` and `stabilizer.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        mtx::write_dense(dir.join("Z.mtx"), &self.z)?;
        mtx::write_dense(dir.join("U.mtx"), &self.u_tilde)?;
        fs::write(dir.join("stabilizer.json"), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, sys: &LinearSystem) -> Result<Self> {
        let dir = dir.as_ref();
        let z = mtx::read_dense(dir.join("Z.mtx"))?;
        let u_tilde = mtx::read_dense(dir.join("U.mtx"))?;
        let manifest: StabilizerManifest = serde_json::from_str(&fs::read_to_string(dir.join("stabilizer.json"))?)?;
        let mut out = Self::from_factor(sys, z)?;
        out.u_tilde = u_tilde;
        out.manifest = manifest;
        Ok(out)
    }
}

/// Build `M`: detect the non-negative part of `G_sym`, form the low-rank
/// right-hand side and solve for the correction `Z Z^T`.
///
/// A dissipative system yields an empty `Z`.
pub fn assemble_stabilizer(sys: &LinearSystem, config: &StabilizerConfig) -> Result<StabilizerFactor> {
    let n = sys.n();
    let rhs = match build_stab_factor_f(sys, config.delta) {
        Ok(r) => r,
        Err(Error::AlreadyDissipative) => {
            let mut out = StabilizerFactor::from_factor(sys, DMatrix::zeros(n, 0))?;
            out.manifest.delta = config.delta;
            out.manifest.delta_eff = config.delta;
            out.manifest.mu_max = crate::dynsys::symmetric_part_spectrum(sys, 1)?.mu_max;
            return Ok(out);
        }
        Err(e) => return Err(e),
    };

    let ratio = rhs.k as f64 / n as f64;
    let mode = match config.mode {
        LyapunovMode::Auto if ratio > config.max_k_ratio => {
            if n > sys.tolerances().dense_cap {
                return Err(Error::RankTooLarge { ratio, limit: config.max_k_ratio, n });
            }
            LyapunovMode::Dense
        }
        LyapunovMode::Auto => LyapunovMode::LowRankAdi,
        m => m,
    };

    let (z, adi_steps, history) = match mode {
        LyapunovMode::Dense => (dense_correction(sys, &rhs.u_tilde)?, 0, Vec::new()),
        _ => {
            let res = solve_lyapunov_lradi(sys, &rhs.u_tilde, &config.adi)?;
            (res.z, res.steps, res.residual_history)
        }
    };
    log::info!("stabilizer: k = {}, mu_max = {:.4e}, q = {}, mode {:?}", rhs.k, rhs.mu_max, z.ncols(), mode);

    let mut out = StabilizerFactor::from_factor(sys, z)?;
    out.u_tilde = rhs.u_tilde;
    out.manifest = StabilizerManifest {
        delta: rhs.delta,
        delta_eff: rhs.delta_eff,
        k: rhs.k,
        mu_max: rhs.mu_max,
        q: out.q(),
        mode,
        adi_steps,
        residual_history: history,
    };
    Ok(out)
}

/// Dense solve of the correction equation, factored as `Z = S sqrt(D)`.
fn dense_correction(sys: &LinearSystem, u_tilde: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sys.check_dense_cap()?;
    let tol = sys.tolerances();
    let rhs = u_tilde * u_tilde.transpose();
    let dm = solve_lyapunov_dense(&sys.a().to_dense(), &sys.e().to_dense(), &rhs, tol)?;
    let eig = sym_eig_dense(&dm, &crate::linalg::Tolerances { symmetry_rel: 1e-8, ..*tol })?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = (sys.n() as f64) * f64::EPSILON * top;
    let keep: Vec<usize> = (0..eig.len()).filter(|&i| eig.values[i] > floor).collect();
    let mut z = DMatrix::zeros(sys.n(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        z.set_column(c, &(eig.vectors.column(i) * eig.values[i].sqrt()));
    }
    Ok(z)
}

/// Test space `W = M E V = E^{-T} V + Z (Z^T E V)` together with
/// `Ebar = I + Y^T Y`, `Y = Z^T E V`.
pub fn stabilized_test_space(sys: &LinearSystem, v: &DMatrix<f64>, stab: &StabilizerFactor) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if v.nrows() != sys.n() || stab.n() != sys.n() {
        return Err(Error::DimensionMismatch(format!("V has {} rows, stabilizer {}, n = {}", v.nrows(), stab.n(), sys.n())));
    }
    let r = v.ncols();
    let ev = sys.e().mul_dense(v);
    let mut w = sys.e_solve_transpose_matrix(v);
    let mut e_bar = DMatrix::identity(r, r);
    if stab.q() > 0 {
        let y = stab.z().tr_mul(&ev);
        w += stab.z() * &y;
        e_bar += y.tr_mul(&y);
    }
    Ok((w, e_bar))
}

/// Reduced system with the stabilizing test space.
///
/// Stability is guaranteed only for the exact Lyapunov solution, so the
/// spectral abscissa is checked afterwards and a violation is logged.
pub fn stabilized_reduce(sys: &LinearSystem, basis: &ProjectionBasis, stab: &StabilizerFactor) -> Result<ReducedSystem> {
    let v = basis.v();
    let (w, e_bar) = stabilized_test_space(sys, v, stab)?;
    let av = sys.a().mul_dense(v);
    let provenance = Provenance { method: basis.method().clone(), r: basis.r(), stabilized: true, w_source: WSource::Stabilized };
    let rom = ReducedSystem::new(e_bar, w.tr_mul(&av), w.tr_mul(sys.b()), sys.c() * v, provenance)?;
    match rom.spectral_abscissa() {
        Ok(alpha) if alpha >= 0.0 => {
            log::warn!("stabilized ROM of order {} has spectral abscissa {alpha:.3e} >= 0 (inexact Lyapunov factor)", rom.r())
        }
        Err(e) => log::warn!("could not verify stabilized ROM of order {}: {e}", rom.r()),
        _ => {}
    }
    Ok(rom)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub cond: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `cond(Ebar) <= 1 + ||E||^2 ||Z||^2` for a stabilized reduction.
pub fn condition_bound_check(sys: &LinearSystem, stab: &StabilizerFactor, rom: &ReducedSystem) -> Result<ConditionCheck> {
    let eig = sym_eig_dense(rom.e(), &crate::linalg::Tolerances { symmetry_rel: 1e-10, ..*sys.tolerances() })?;
    let (hi, lo) = (eig.values[0], *eig.values.last().unwrap());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let z_norm = spectral_norm(stab.z());
    let bound = 1.0 + mass_norm(sys)?.powi(2) * z_norm * z_norm;
    Ok(ConditionCheck { cond, bound, holds: cond <= bound * (1.0 + 1e-10) })
}

/// `||E||_2`: exact for diagonal `E`, dense for small `n`, Lanczos on `E^T E` otherwise.
pub fn mass_norm(sys: &LinearSystem) -> Result<f64> {
    let e = sys.e();
    if e.is_diagonal() {
        return Ok(e.triplets().map(|(_, _, v)| v.abs()).fold(0.0, f64::max));
    }
    if sys.n() <= 500 {
        return Ok(spectral_norm(&e.to_dense()));
    }
    let opts = LanczosOptions { tol: 1e-12, ..Default::default() };
    let eig = dominant_sym_eigs(|x: &DVector<f64>| e.tr_mul_vec(&e.mul_vec(x)), sys.n(), 1, &opts)?;
    Ok(eig.values[0].max(0.0).sqrt())
}

/// `M^{1/2}` and `M^{-1/2}` for `E = I`.
pub fn matrix_sqrt_factor(stab: &StabilizerFactor) -> Result<MatrixSqrt> {
    if !stab.mass_is_identity() {
        return Err(Error::NotIdentityMass);
    }
    MatrixSqrt::new(stab.z())
}
