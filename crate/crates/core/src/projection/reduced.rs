use nalgebra::{DMatrix, Dyn, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::BasisMethod;
use crate::dynsys::{FrequencyResponse, LinearSystem};
use crate::error::{Error, Result};
use crate::linalg::{real_schur, SparseMatrix, Tolerances};

/// Where the test space `W` came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WSource {
    /// `W = V`
    Galerkin,
    /// Caller-supplied `W`.
    External,
    /// `W = M E V` from a stabilizer.
    Stabilized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: BasisMethod,
    pub r: usize,
    pub stabilized: bool,
    pub w_source: WSource,
}

/// Relative distance from the imaginary axis below which a reduced pole counts as marginal.
pub const STABILITY_MARGIN: f64 = 1e-10;

/// Dense reduced-order model `Ebar x' = Abar x + Bbar u`, `y = Cbar x`.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    e: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    e_lu: LU<f64, Dyn, Dyn>,
    provenance: Provenance,
}

impl ReducedSystem {
    pub fn new(e: DMatrix<f64>, a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        let r = a.nrows();
        if e.shape() != (r, r) || a.ncols() != r || b.nrows() != r || c.ncols() != r {
            return Err(Error::DimensionMismatch(format!(
                "reduced matrices: E {:?}, A {:?}, B {:?}, C {:?}",
                e.shape(),
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        let e_lu = e.clone().lu();
        let u = e_lu.u();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for k in 0..r {
            lo = lo.min(u[(k, k)].abs());
            hi = hi.max(u[(k, k)].abs());
        }
        if r > 0 && !(lo > (r as f64) * f64::EPSILON * hi) {
            return Err(Error::SingularReducedMass);
        }
        Ok(Self { e, a, b, c, e_lu, provenance })
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn r(&self) -> usize {
        self.a.nrows()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// `Ebar^{-1} m`
    pub fn e_solve(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.e_lu.solve(m).expect("reduced mass checked non-singular")
    }

    pub fn e_inv_a(&self) -> DMatrix<f64> {
        self.e_solve(&self.a)
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        let tol = Tolerances::default();
        Ok(real_schur(&self.e_inv_a(), &tol)?.eigenvalues)
    }

    pub fn spectral_abscissa(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
    }

    /// Asymptotic stability with a margin: `alpha < -STABILITY_MARGIN * max(1, max |lambda|)`.
    /// Eigenvalues closer to the imaginary axis are treated as marginal.
    pub fn is_stable(&self) -> Result<bool> {
        let eig = self.eigenvalues()?;
        let scale = eig.iter().map(|l| l.norm()).fold(1.0, f64::max);
        let alpha = eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        Ok(alpha < -STABILITY_MARGIN * scale)
    }

    pub fn to_linear_system(&self) -> Result<LinearSystem> {
        LinearSystem::new(
            SparseMatrix::from_dense(&self.e),
            SparseMatrix::from_dense(&self.a),
            self.b.clone(),
            self.c.clone(),
        )
    }
}

impl FrequencyResponse for ReducedSystem {
    fn n_in(&self) -> usize {
        self.b.ncols()
    }

    fn n_out(&self) -> usize {
        self.c.nrows()
    }

    fn eval(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        let r = self.r();
        let m = DMatrix::from_fn(r, r, |i, j| s * self.e[(i, j)] - self.a[(i, j)]);
        let lu = m.lu();
        let u = lu.u();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for k in 0..r {
            lo = lo.min(u[(k, k)].norm());
            hi = hi.max(u[(k, k)].norm());
        }
        if r > 0 && (lo == 0.0 || hi / lo > 1.0 / f64::EPSILON) {
            return Err(Error::PoleHit { re: s.re, im: s.im });
        }
        let b = self.b.map(|v| Complex64::new(v, 0.0));
        let x = lu.solve(&b).ok_or(Error::PoleHit { re: s.re, im: s.im })?;
        Ok(self.c.map(|v| Complex64::new(v, 0.0)) * x)
    }

    fn poles(&self) -> Result<Option<Vec<Complex64>>> {
        Ok(Some(self.eigenvalues()?))
    }
}
