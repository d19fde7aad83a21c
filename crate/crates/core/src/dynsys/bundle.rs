//! On-disk system bundle: `E.mtx`, `A.mtx`, `B.mtx`, `C.mtx` and `manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LinearSystem;
use crate::error::{Error, Result};
use crate::linalg::{mtx, SparseMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub n: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub descriptor: bool,
    /// Free-form description of how the system was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<serde_json::Value>,
}

pub fn save_bundle(sys: &LinearSystem, dir: impl AsRef<Path>, source: Option<serde_json::Value>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    mtx::write_sparse(dir.join("E.mtx"), sys.e())?;
    mtx::write_sparse(dir.join("A.mtx"), sys.a())?;
    mtx::write_sparse(dir.join("B.mtx"), &SparseMatrix::from_dense(sys.b()))?;
    mtx::write_sparse(dir.join("C.mtx"), &SparseMatrix::from_dense(sys.c()))?;
    let manifest = BundleManifest {
        n: sys.n(),
        n_in: sys.n_in(),
        n_out: sys.n_out(),
        descriptor: sys.is_descriptor(),
        source,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<(LinearSystem, BundleManifest)> {
    let dir = dir.as_ref();
    let manifest: BundleManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let a = mtx::read_sparse(dir.join("A.mtx"))?;
    let e = if dir.join("E.mtx").exists() {
        mtx::read_sparse(dir.join("E.mtx"))?
    } else {
        SparseMatrix::identity(a.nrows())
    };
    let b = mtx::read_dense(dir.join("B.mtx"))?;
    let c = mtx::read_dense(dir.join("C.mtx"))?;
    let sys = LinearSystem::new(e, a, b, c)?;
    if (sys.n(), sys.n_in(), sys.n_out()) != (manifest.n, manifest.n_in, manifest.n_out) {
        return Err(Error::DimensionMismatch(format!(
            "manifest says (n, n_in, n_out) = ({}, {}, {}) but the matrices give ({}, {}, {})",
            manifest.n,
            manifest.n_in,
            manifest.n_out,
            sys.n(),
            sys.n_in(),
            sys.n_out()
        )));
    }
    Ok((sys, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = SparseMatrix::from_diagonal(&[1.0, 2.0]);
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, -1.0), (0, 1, 0.5), (1, 1, -3.0)]).unwrap();
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let sys = LinearSystem::new(e, a, b, c).unwrap();
        save_bundle(&sys, dir.path(), None).unwrap();
        let (back, manifest) = load_bundle(dir.path()).unwrap();
        assert!(manifest.descriptor);
        assert_eq!(back.a(), sys.a());
        assert_eq!(back.e(), sys.e());
        assert_eq!(back.b(), sys.b());
        assert_eq!(back.c(), sys.c());
    }
}
