//! Projection bases and the projected (reduced) system.

mod arnoldi;
mod pod;
mod reduced;

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynsys::LinearSystem;
use crate::error::{Error, Result};
use crate::linalg::{mtx, orthonormality_defect, Tolerances};

pub use arnoldi::arnoldi_basis;
pub use pod::pod_basis;
pub use reduced::{Provenance, ReducedSystem, WSource, STABILITY_MARGIN};

/// How a basis was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisMethod {
    Arnoldi { s0: f64 },
    Pod { singular_values: Vec<f64> },
    External,
}

/// `n x r` matrix with orthonormal columns.
#[derive(Clone, Debug)]
pub struct ProjectionBasis {
    v: DMatrix<f64>,
    method: BasisMethod,
    breakdown: bool,
}

#[derive(Serialize, Deserialize)]
struct BasisSidecar {
    n: usize,
    r: usize,
    method: BasisMethod,
    breakdown: bool,
}

impl ProjectionBasis {
    pub fn new(v: DMatrix<f64>, method: BasisMethod) -> Result<Self> {
        Self::with_tolerance(v, method, Tolerances::DEFAULT.orthonormality)
    }

    pub fn with_tolerance(v: DMatrix<f64>, method: BasisMethod, tol: f64) -> Result<Self> {
        if v.ncols() == 0 || v.ncols() > v.nrows() {
            return Err(Error::InvalidSpec(format!("basis must have 1..=n columns, got {}x{}", v.nrows(), v.ncols())));
        }
        let defect = orthonormality_defect(&v);
        if defect.is_nan() || defect > tol {
            return Err(Error::NotOrthonormal { defect });
        }
        Ok(Self { v, method, breakdown: false })
    }

    pub(crate) fn with_breakdown(mut self, breakdown: bool) -> Self {
        self.breakdown = breakdown;
        self
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn r(&self) -> usize {
        self.v.ncols()
    }

    pub fn method(&self) -> &BasisMethod {
        &self.method
    }

    /// True when the Krylov recurrence ran out of new directions before reaching the requested order.
    pub fn breakdown(&self) -> bool {
        self.breakdown
    }

    /// First `r` columns as a basis of its own.
    pub fn truncate(&self, r: usize) -> Result<Self> {
        if r == 0 || r > self.r() {
            return Err(Error::InvalidSpec(format!("cannot truncate a basis of order {} to {r}", self.r())));
        }
        let method = match &self.method {
            BasisMethod::Pod { singular_values } => BasisMethod::Pod { singular_values: singular_values[..r].to_vec() },
            other => other.clone(),
        };
        Ok(Self { v: self.v.columns(0, r).into_owned(), method, breakdown: false })
    }

    /// Write `<stem>.mtx` and `<stem>.json`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        mtx::write_dense(dir.join(format!("{stem}.mtx")), &self.v)?;
        let side = BasisSidecar { n: self.n(), r: self.r(), method: self.method.clone(), breakdown: self.breakdown };
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let v = mtx::read_dense(dir.join(format!("{stem}.mtx")))?;
        let side: BasisSidecar = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        Ok(Self::new(v, side.method)?.with_breakdown(side.breakdown))
    }
}

/// Projected system with test space `W` (defaults to `V`).
pub fn galerkin_reduce(sys: &LinearSystem, basis: &ProjectionBasis, w: Option<&DMatrix<f64>>) -> Result<ReducedSystem> {
    let v = basis.v();
    if v.nrows() != sys.n() {
        return Err(Error::DimensionMismatch(format!("basis has {} rows, system has n = {}", v.nrows(), sys.n())));
    }
    let (w, source) = match w {
        Some(w) => {
            if w.shape() != v.shape() {
                return Err(Error::DimensionMismatch(format!("W is {}x{}, V is {}x{}", w.nrows(), w.ncols(), v.nrows(), v.ncols())));
            }
            (w, WSource::External)
        }
        None => (v, WSource::Galerkin),
    };
    let ev = sys.e().mul_dense(v);
    let av = sys.a().mul_dense(v);
    let provenance = Provenance { method: basis.method().clone(), r: basis.r(), stabilized: false, w_source: source };
    ReducedSystem::new(w.tr_mul(&ev), w.tr_mul(&av), w.tr_mul(sys.b()), sys.c() * v, provenance)
}

/// `s(t) = E V xbar' - A V xbar - B u`.
pub fn residual(
    sys: &LinearSystem,
    v: &DMatrix<f64>,
    xbar: &DVector<f64>,
    xbar_dot: &DVector<f64>,
    u: &DVector<f64>,
) -> DVector<f64> {
    sys.e().mul_vec(&(v * xbar_dot)) - sys.a().mul_vec(&(v * xbar)) - sys.b() * u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseMatrix;

    fn crafted() -> LinearSystem {
        let a = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[-1.0, 4.0, 0.0, -1.0]));
        LinearSystem::standard(a, DMatrix::from_column_slice(2, 1, &[1.0, 1.0]), DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap()
    }

    #[test]
    fn diagonal_direction_destabilizes() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let basis = ProjectionBasis::new(DMatrix::from_column_slice(2, 1, &[s, s]), BasisMethod::External).unwrap();
        let rom = galerkin_reduce(&crafted(), &basis, None).unwrap();
        assert!((rom.a()[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(rom.spectral_abscissa().unwrap() > 0.0);
    }

    #[test]
    fn first_axis_stays_stable() {
        let basis = ProjectionBasis::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), BasisMethod::External).unwrap();
        let rom = galerkin_reduce(&crafted(), &basis, None).unwrap();
        assert_eq!(rom.a()[(0, 0)], -1.0);
    }

    #[test]
    fn full_basis_reproduces_system() {
        let sys = crafted();
        let basis = ProjectionBasis::new(DMatrix::identity(2, 2), BasisMethod::External).unwrap();
        let rom = galerkin_reduce(&sys, &basis, None).unwrap();
        assert_eq!(rom.a(), &sys.a().to_dense());
        assert_eq!(rom.e(), &DMatrix::identity(2, 2));
        assert_eq!(rom.b(), sys.b());
        assert_eq!(rom.c(), sys.c());
    }

    #[test]
    fn non_orthonormal_basis_is_rejected() {
        let r = ProjectionBasis::new(DMatrix::from_column_slice(2, 1, &[1.0, 1.0]), BasisMethod::External);
        assert!(matches!(r, Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn zero_state_has_zero_residual() {
        let sys = crafted();
        let v = DMatrix::identity(2, 2);
        let z = DVector::zeros(2);
        assert_eq!(residual(&sys, &v, &z, &z, &DVector::zeros(1)).norm(), 0.0);
    }

    #[test]
    fn basis_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let basis = ProjectionBasis::new(DMatrix::identity(3, 2), BasisMethod::Arnoldi { s0: 1.0 }).unwrap();
        basis.save(dir.path(), "V").unwrap();
        let back = ProjectionBasis::load(dir.path(), "V").unwrap();
        assert_eq!(back.v(), basis.v());
        assert_eq!(back.method(), basis.method());
    }
}
