use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular to working precision (pivot step {step})")]
    SingularMatrix { step: usize },

    #[error("matrix is not symmetric: max |m - m^T| = {defect:e} exceeds {tolerance:e}")]
    SymmetryViolation { defect: f64, tolerance: f64 },

    #[error("{what} did not converge after {iterations} iterations (best residual {best_residual:e})")]
    ConvergenceFailure {
        what: &'static str,
        iterations: usize,
        best_residual: f64,
    },

    #[error("dimension {n} exceeds the dense cap {cap}; use sampled or low-rank checks instead")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("mass matrix E is singular")]
    SingularE,

    #[error("s = {re} + {im}i is (numerically) a pole of the transfer function")]
    PoleHit { re: f64, im: f64 },

    #[error("reduced mass matrix is singular; consider the stabilized reduction")]
    SingularReducedMass,

    #[error("snapshot matrix is rank deficient: sigma_r / sigma_1 = {ratio:e}")]
    RankDeficient { ratio: f64 },

    #[error("basis columns are not orthonormal: ||V^T V - I|| = {defect:e}")]
    NotOrthonormal { defect: f64 },

    #[error("system is already dissipative (k = 0); no stabilizing update is needed")]
    AlreadyDissipative,

    #[error("pencil (E, A) is not asymptotically stable (eigenvalue with real part {real_part:e})")]
    UnstablePencil { real_part: f64 },

    #[error("ADI shift {shift} coincides with an eigenvalue")]
    ShiftFailure { shift: String },

    #[error("k/n = {ratio:.4} exceeds the low-rank limit {limit} and n = {n} exceeds the dense cap")]
    RankTooLarge { ratio: f64, limit: f64, n: usize },

    #[error("matrix square root factor requires E = I")]
    NotIdentityMass,

    #[error("||f(x*)|| = {residual:e} is not an equilibrium (tolerance {tolerance:e})")]
    EquilibriumResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("equilibrium is not at the origin; shift the system first")]
    EquilibriumNotAtOrigin,

    #[error("operand {0} of the H2 error is not asymptotically stable")]
    UnstableOperand(&'static str),

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("time grids differ and interpolation is disabled")]
    GridMismatch,

    #[error("could not generate a system with the requested properties after {attempts} attempts")]
    ResampleExhausted { attempts: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("Matrix Market parse error in {path:?} at line {line}: {message}")]
    MatrixMarket {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical kernel (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularMatrix { .. }
                | Error::ConvergenceFailure { .. }
                | Error::SingularE
                | Error::PoleHit { .. }
                | Error::SingularReducedMass
                | Error::RankDeficient { .. }
                | Error::UnstablePencil { .. }
                | Error::ShiftFailure { .. }
                | Error::StepSizeUnderflow { .. }
                | Error::UnstableOperand(_)
                | Error::ResampleExhausted { .. }
        )
    }
}
