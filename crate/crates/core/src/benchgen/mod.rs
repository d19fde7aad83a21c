//! Deterministic benchmark systems.

mod convdiff;
mod msd;
mod nonnormal;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynsys::LinearSystem;
use crate::error::Result;
use crate::linalg::SparseMatrix;
use crate::nonlinear::{JacobianField, NonlinearSystem, VectorField};

pub use convdiff::{gen_convection_diffusion, graded_mesh, ConvDiffSpec, VelocityProfile};
pub use msd::{gen_cubic_msd, gen_msd_chain, CubicMsdSpec, MsdChainSpec};
pub use nonnormal::{gen_nonnormal_stable, NonNormalSpec, NonNormalSystem};

/// Any linear generator, as stored in bundle manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Msd(MsdChainSpec),
    Nonnormal(NonNormalSpec),
    Convdiff(ConvDiffSpec),
    Crafted,
}

pub fn generate(spec: &GeneratorSpec) -> Result<LinearSystem> {
    match spec {
        GeneratorSpec::Msd(s) => gen_msd_chain(s),
        GeneratorSpec::Nonnormal(s) => Ok(gen_nonnormal_stable(s)?.system),
        GeneratorSpec::Convdiff(s) => gen_convection_diffusion(s),
        GeneratorSpec::Crafted => Ok(crafted_linear()),
    }
}

fn crafted_a() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[-1.0, 4.0, 0.0, -1.0])
}

/// `A = [-1 4; 0 -1]`, `B = (1, 1)^T`, `C = (1, 0)`: stable, not dissipative,
/// and unstable after Galerkin projection onto `(1, 1)^T / sqrt(2)`.
pub fn crafted_linear() -> LinearSystem {
    LinearSystem::from_dense(&DMatrix::identity(2, 2), &crafted_a(), DMatrix::from_column_slice(2, 1, &[1.0, 1.0]), DMatrix::from_row_slice(1, 2, &[1.0, 0.0]))
        .expect("crafted system is well formed")
}

/// `x' = A x - x^3` with the crafted `A`.
pub fn crafted_cubic() -> NonlinearSystem {
    let a = SparseMatrix::from_dense(&crafted_a());
    let a2 = a.clone();
    let f: VectorField = Arc::new(move |x: &DVector<f64>| a.mul_vec(x) - x.map(|v| v * v * v));
    let jac: JacobianField = Arc::new(move |x: &DVector<f64>| {
        let d = SparseMatrix::from_diagonal(&x.iter().map(|v| -3.0 * v * v).collect::<Vec<_>>());
        SparseMatrix::combine(1.0, &a2, 1.0, &d)
    });
    NonlinearSystem::new(SparseMatrix::identity(2), f, jac, DVector::zeros(2))
        .and_then(|s| s.with_input(DMatrix::from_column_slice(2, 1, &[1.0, 1.0])))
        .and_then(|s| s.with_output(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])))
        .expect("crafted system is well formed")
}
