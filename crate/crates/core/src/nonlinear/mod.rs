//! Nonlinear systems `E x' = f(x) + B u` and their projections around a
//! stationary solution.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynsys::{stability_report, LinearSystem, StabilityReport};
use crate::error::{Error, Result};
use crate::linalg::{lu_factor, schur_eigenvalues, real_schur, LuFactorization, SparseMatrix, Tolerances};
use crate::projection::ProjectionBasis;
use crate::stabilize::{assemble_stabilizer, stabilized_test_space, StabilizerConfig, StabilizerFactor};

pub type VectorField = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianField = Arc<dyn Fn(&DVector<f64>) -> SparseMatrix + Send + Sync>;

/// Relative tolerance for `f(x*) = 0`.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

#[derive(Clone)]
pub struct NonlinearSystem {
    e: SparseMatrix,
    e_lu: Arc<LuFactorization<f64>>,
    e_identity: bool,
    f: VectorField,
    jac: JacobianField,
    b: Option<DMatrix<f64>>,
    c: Option<DMatrix<f64>>,
    equilibrium: DVector<f64>,
    /// Original coordinates of the current origin, `x_orig = x + offset`.
    offset: DVector<f64>,
    fd_jacobian: bool,
}

impl fmt::Debug for NonlinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearSystem")
            .field("n", &self.n())
            .field("n_in", &self.n_in())
            .field("n_out", &self.n_out())
            .field("fd_jacobian", &self.fd_jacobian)
            .finish_non_exhaustive()
    }
}

fn equilibrium_scale(jac: &SparseMatrix, x: &DVector<f64>) -> f64 {
    1.0 + jac.norm_one() * x.amax()
}

impl NonlinearSystem {
    /// Checks `||f(x*)||_inf <= 1e-10 * scale` with `scale = 1 + ||J(x*)||_1 ||x*||_inf`.
    pub fn new(e: SparseMatrix, f: VectorField, jac: JacobianField, equilibrium: DVector<f64>) -> Result<Self> {
        let n = e.nrows();
        if e.ncols() != n || equilibrium.len() != n {
            return Err(Error::DimensionMismatch(format!("E is {}x{}, x* has length {}", e.nrows(), e.ncols(), equilibrium.len())));
        }
        let e_lu = match lu_factor(&e) {
            Ok(lu) => lu,
            Err(Error::SingularMatrix { .. }) => return Err(Error::SingularE),
            Err(other) => return Err(other),
        };
        let out = Self {
            e_identity: e.is_identity(),
            e,
            e_lu: Arc::new(e_lu),
            f,
            jac,
            b: None,
            c: None,
            offset: DVector::zeros(n),
            equilibrium,
            fd_jacobian: false,
        };
        out.check_equilibrium(&out.equilibrium)?;
        Ok(out)
    }

    /// Uses central differences of `f` in place of an analytic Jacobian.
    /// Intended for testing only.
    pub fn with_fd_jacobian(e: SparseMatrix, f: VectorField, equilibrium: DVector<f64>) -> Result<Self> {
        log::warn!("finite-difference Jacobian in use; stability verdicts are approximate");
        let g = f.clone();
        let jac: JacobianField = Arc::new(move |x: &DVector<f64>| SparseMatrix::from_dense(&fd_jacobian(&*g, x)));
        let mut out = Self::new(e, f, jac, equilibrium)?;
        out.fd_jacobian = true;
        Ok(out)
    }

    pub fn with_input(mut self, b: DMatrix<f64>) -> Result<Self> {
        if b.nrows() != self.n() {
            return Err(Error::DimensionMismatch(format!("B has {} rows, expected {}", b.nrows(), self.n())));
        }
        self.b = Some(b);
        Ok(self)
    }

    pub fn with_output(mut self, c: DMatrix<f64>) -> Result<Self> {
        if c.ncols() != self.n() {
            return Err(Error::DimensionMismatch(format!("C has {} columns, expected {}", c.ncols(), self.n())));
        }
        self.c = Some(c);
        Ok(self)
    }

    fn check_equilibrium(&self, x: &DVector<f64>) -> Result<()> {
        let residual = (self.f)(x).amax();
        let tolerance = EQUILIBRIUM_TOL * equilibrium_scale(&(self.jac)(x), x);
        if residual.is_nan() || residual > tolerance {
            return Err(Error::EquilibriumResidualTooLarge { residual, tolerance });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.e.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.b.as_ref().map_or(0, |b| b.ncols())
    }

    /// Without `C` the full state is the output.
    pub fn n_out(&self) -> usize {
        self.c.as_ref().map_or(self.n(), |c| c.nrows())
    }

    pub fn e(&self) -> &SparseMatrix {
        &self.e
    }

    pub fn b(&self) -> Option<&DMatrix<f64>> {
        self.b.as_ref()
    }

    pub fn c(&self) -> Option<&DMatrix<f64>> {
        self.c.as_ref()
    }

    pub fn equilibrium(&self) -> &DVector<f64> {
        &self.equilibrium
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn uses_fd_jacobian(&self) -> bool {
        self.fd_jacobian
    }

    pub fn f(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> SparseMatrix {
        (self.jac)(x)
    }

    pub fn vector_field(&self) -> &VectorField {
        &self.f
    }

    pub fn jacobian_field(&self) -> &JacobianField {
        &self.jac
    }

    pub fn e_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.e_identity {
            v.clone()
        } else {
            self.e_lu.solve(v)
        }
    }

    /// Output in the original coordinates, `C (x + offset)`.
    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        let full = x + &self.offset;
        match &self.c {
            Some(c) => c * full,
            None => full,
        }
    }

    /// `f(x) + B u0` with the constant input folded into the vector field.
    /// The result keeps `B` for further inputs; the equilibrium must be
    /// supplied for the forced system.
    pub fn with_constant_input(&self, u0: &DVector<f64>, equilibrium: DVector<f64>) -> Result<Self> {
        let b = self.b.clone().ok_or_else(|| Error::InvalidSpec("system has no input matrix".into()))?;
        if u0.len() != b.ncols() {
            return Err(Error::DimensionMismatch(format!("u0 has length {}, B has {} columns", u0.len(), b.ncols())));
        }
        let bu = &b * u0;
        let f = self.f.clone();
        let mut out = self.clone();
        out.f = Arc::new(move |x: &DVector<f64>| f(x) + &bu);
        out.equilibrium = equilibrium;
        out.check_equilibrium(&out.equilibrium)?;
        Ok(out)
    }
}

/// Newton iteration for `f(x) = 0` starting from `x0`.
pub fn newton_equilibrium(
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    jac: &dyn Fn(&DVector<f64>) -> SparseMatrix,
    x0: DVector<f64>,
    max_iter: usize,
) -> Result<DVector<f64>> {
    let mut x = x0;
    let mut best = f64::INFINITY;
    for it in 0..max_iter {
        let fx = f(&x);
        let j = jac(&x);
        best = best.min(fx.amax());
        if fx.amax() <= 0.1 * EQUILIBRIUM_TOL * equilibrium_scale(&j, &x) {
            log::debug!("Newton converged after {it} iterations");
            return Ok(x);
        }
        let lu = lu_factor(&j)?;
        x -= lu.solve(&fx);
    }
    Err(Error::ConvergenceFailure { what: "Newton equilibrium", iterations: max_iter, best_residual: best })
}

/// `g(x) = f(x + x*)`, so that the equilibrium sits at the origin.
pub fn shift_to_origin(sys: &NonlinearSystem) -> Result<NonlinearSystem> {
    sys.check_equilibrium(&sys.equilibrium)?;
    let n = sys.n();
    if sys.equilibrium.iter().all(|&v| v == 0.0) {
        return Ok(sys.clone());
    }
    let xs = sys.equilibrium.clone();
    let (f, jac) = (sys.f.clone(), sys.jac.clone());
    let x1 = xs.clone();
    let mut out = sys.clone();
    out.f = Arc::new(move |x: &DVector<f64>| f(&(x + &x1)));
    out.jac = Arc::new(move |x: &DVector<f64>| jac(&(x + &xs)));
    out.offset = &sys.offset + &sys.equilibrium;
    out.equilibrium = DVector::zeros(n);
    Ok(out)
}

/// Linear system `E x' = J(x*) x + B u`, `y = C x` around the equilibrium.
pub fn linearize(sys: &NonlinearSystem) -> Result<LinearSystem> {
    let n = sys.n();
    let b = sys.b.clone().unwrap_or_else(|| DMatrix::zeros(n, 1));
    let c = sys.c.clone().unwrap_or_else(|| DMatrix::zeros(1, n));
    LinearSystem::new(sys.e.clone(), sys.jacobian(&sys.equilibrium), b, c)
}

/// Stability of the equilibrium through `E^{-1} J(x*)`.
pub fn equilibrium_stability(sys: &NonlinearSystem) -> Result<StabilityReport> {
    stability_report(&linearize(sys)?)
}

/// Stabilizer built from the Jacobian at the equilibrium.
pub fn nonlinear_stabilizer(sys: &NonlinearSystem, config: &StabilizerConfig) -> Result<StabilizerFactor> {
    assemble_stabilizer(&linearize(sys)?, config)
}

/// Central differences with step `1e-6 * max(1, |x_j|)`.
pub fn fd_jacobian(f: &dyn Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    for k in 0..n {
        let h = 1e-6 * x[k].abs().max(1.0);
        xp[k] = x[k] + h;
        let fp = f(&xp);
        xp[k] = x[k] - h;
        let fm = f(&xp);
        xp[k] = x[k];
        j.set_column(k, &((fp - fm) / (2.0 * h)));
    }
    j
}

/// `||J(x) - J_fd(x)||_F / ||J(x)||_F`.
pub fn jacobian_check(sys: &NonlinearSystem, x: &DVector<f64>) -> f64 {
    let exact = sys.jacobian(x).to_dense();
    let approx = fd_jacobian(&*sys.f, x);
    (&exact - approx).norm() / exact.norm().max(f64::MIN_POSITIVE)
}

/// `Ebar xbar' = W^T f(V xbar) + W^T B u`, `ybar = C V xbar`.
#[derive(Clone)]
pub struct NonlinearRom {
    e_bar: DMatrix<f64>,
    e_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    v: DMatrix<f64>,
    w: DMatrix<f64>,
    b_bar: Option<DMatrix<f64>>,
    c_bar: DMatrix<f64>,
    f: VectorField,
    jac: JacobianField,
    stabilized: bool,
}

impl fmt::Debug for NonlinearRom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearRom").field("r", &self.r()).field("stabilized", &self.stabilized).finish_non_exhaustive()
    }
}

impl NonlinearRom {
    pub fn r(&self) -> usize {
        self.v.ncols()
    }

    pub fn n_in(&self) -> usize {
        self.b_bar.as_ref().map_or(0, |b| b.ncols())
    }

    pub fn n_out(&self) -> usize {
        self.c_bar.nrows()
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e_bar
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn b(&self) -> Option<&DMatrix<f64>> {
        self.b_bar.as_ref()
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c_bar
    }

    pub fn is_stabilized(&self) -> bool {
        self.stabilized
    }

    /// `W^T f(V xbar)`
    pub fn f(&self, xbar: &DVector<f64>) -> DVector<f64> {
        self.w.tr_mul(&(self.f)(&(&self.v * xbar)))
    }

    /// `W^T J(V xbar) V`
    pub fn jacobian(&self, xbar: &DVector<f64>) -> DMatrix<f64> {
        let j = (self.jac)(&(&self.v * xbar));
        self.w.tr_mul(&j.mul_dense(&self.v))
    }

    pub fn e_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.e_lu.solve(v).expect("reduced mass matrix was checked at construction")
    }

    pub fn output(&self, xbar: &DVector<f64>) -> DVector<f64> {
        &self.c_bar * xbar
    }

    /// Spectral abscissa of `Ebar^{-1} W^T J(0) V`.
    pub fn spectral_abscissa_at_origin(&self) -> Result<f64> {
        let j = self.jacobian(&DVector::zeros(self.r()));
        let m = self.e_lu.solve(&j).ok_or(Error::SingularReducedMass)?;
        let schur = real_schur(&m, &Tolerances::DEFAULT)?;
        Ok(schur_eigenvalues(&schur.t).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Projection of a nonlinear system whose equilibrium is the origin.
///
/// Without a stabilizer `W = V`; otherwise `W = M E V` with `M` built from
/// the Jacobian at the origin.
pub fn nonlinear_reduce(sys: &NonlinearSystem, basis: &ProjectionBasis, stab: Option<&StabilizerFactor>) -> Result<NonlinearRom> {
    if sys.equilibrium.iter().any(|&v| v != 0.0) {
        return Err(Error::EquilibriumNotAtOrigin);
    }
    let v = basis.v().clone();
    if v.nrows() != sys.n() {
        return Err(Error::DimensionMismatch(format!("basis has {} rows, system has n = {}", v.nrows(), sys.n())));
    }
    let (w, e_bar) = match stab {
        Some(stab) => stabilized_test_space(&linearize(sys)?, &v, stab)?,
        None => {
            let ev = sys.e.mul_dense(&v);
            let e_bar = v.tr_mul(&ev);
            (v.clone(), e_bar)
        }
    };
    let r = v.ncols();
    let e_lu = e_bar.clone().lu();
    let u = e_lu.u();
    let dmax = (0..r).map(|i| u[(i, i)].abs()).fold(0.0, f64::max);
    let dmin = (0..r).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(dmin > r as f64 * f64::EPSILON * dmax) {
        return Err(Error::SingularReducedMass);
    }
    let b_bar = sys.b.as_ref().map(|b| w.tr_mul(b));
    let c_bar = match &sys.c {
        Some(c) => c * &v,
        None => v.clone(),
    };
    let rom = NonlinearRom { e_bar, e_lu, v, w, b_bar, c_bar, f: sys.f.clone(), jac: sys.jac.clone(), stabilized: stab.is_some() };
    if stab.is_some() {
        if let Ok(alpha) = rom.spectral_abscissa_at_origin() {
            if alpha >= 0.0 {
                log::warn!("stabilized nonlinear ROM of order {r} has spectral abscissa {alpha:.3e} >= 0 at the origin");
            }
        }
    }
    Ok(rom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{galerkin_reduce, BasisMethod};
    use crate::stabilize::{stabilized_reduce, LyapunovMode};

    fn crafted_cubic() -> NonlinearSystem {
        let a = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[-1.0, 4.0, 0.0, -1.0]));
        let a2 = a.clone();
        let f: VectorField = Arc::new(move |x: &DVector<f64>| a.mul_vec(x) - x.map(|v| v * v * v));
        let jac: JacobianField = Arc::new(move |x: &DVector<f64>| {
            let d = SparseMatrix::from_diagonal(&x.iter().map(|v| -3.0 * v * v).collect::<Vec<_>>());
            SparseMatrix::combine(1.0, &a2, 1.0, &d)
        });
        NonlinearSystem::new(SparseMatrix::identity(2), f, jac, DVector::zeros(2)).unwrap()
    }

    fn diagonal_basis() -> ProjectionBasis {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        ProjectionBasis::new(DMatrix::from_column_slice(2, 1, &[s, s]), BasisMethod::External).unwrap()
    }

    #[test]
    fn shift_of_affine_field() {
        let f: VectorField = Arc::new(|x: &DVector<f64>| x.map(|v| -(v - 1.0)));
        let jac: JacobianField = Arc::new(|_: &DVector<f64>| SparseMatrix::identity(1).scale(-1.0));
        let sys = NonlinearSystem::new(SparseMatrix::identity(1), f, jac, DVector::from_element(1, 1.0)).unwrap();
        let g = shift_to_origin(&sys).unwrap();
        for x in [-2.0, 0.0, 0.5, 3.0] {
            assert_eq!(g.f(&DVector::from_element(1, x))[0], -x);
        }
        assert_eq!(g.output(&DVector::zeros(1))[0], 1.0);
    }

    #[test]
    fn wrong_equilibrium_is_rejected() {
        let f: VectorField = Arc::new(|x: &DVector<f64>| x.map(|v| 1.0 - v));
        let jac: JacobianField = Arc::new(|_: &DVector<f64>| SparseMatrix::identity(1).scale(-1.0));
        let r = NonlinearSystem::new(SparseMatrix::identity(1), f, jac, DVector::zeros(1));
        assert!(matches!(r, Err(Error::EquilibriumResidualTooLarge { .. })));
    }

    #[test]
    fn decay_has_unit_abscissa() {
        let f: VectorField = Arc::new(|x: &DVector<f64>| -x);
        let jac: JacobianField = Arc::new(|_: &DVector<f64>| SparseMatrix::identity(3).scale(-1.0));
        let sys = NonlinearSystem::new(SparseMatrix::identity(3), f, jac, DVector::zeros(3)).unwrap();
        let rep = equilibrium_stability(&sys).unwrap();
        assert!((rep.spectral_abscissa.unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_differences() {
        let sys = crafted_cubic();
        let x = DVector::from_vec(vec![0.3, -1.2]);
        assert!(jacobian_check(&sys, &x) < 1e-6);
    }

    #[test]
    fn crafted_cubic_counterexample() {
        let sys = crafted_cubic();
        let conventional = nonlinear_reduce(&sys, &diagonal_basis(), None).unwrap();
        assert!(conventional.spectral_abscissa_at_origin().unwrap() > 0.0);
        let stab = nonlinear_stabilizer(&sys, &StabilizerConfig { mode: LyapunovMode::Dense, ..Default::default() }).unwrap();
        let rom = nonlinear_reduce(&sys, &diagonal_basis(), Some(&stab)).unwrap();
        assert!(rom.spectral_abscissa_at_origin().unwrap() < 0.0);
        assert_eq!(rom.f(&DVector::zeros(1)), DVector::zeros(1));
    }

    #[test]
    fn linear_field_matches_linear_reduction() {
        let a = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[-1.0, 4.0, 0.0, -1.0]));
        let lin = LinearSystem::standard(a.clone(), DMatrix::from_column_slice(2, 1, &[1.0, 1.0]), DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        let a2 = a.clone();
        let f: VectorField = Arc::new(move |x: &DVector<f64>| a.mul_vec(x));
        let jac: JacobianField = Arc::new(move |_: &DVector<f64>| a2.clone());
        let sys = NonlinearSystem::new(SparseMatrix::identity(2), f, jac, DVector::zeros(2))
            .unwrap()
            .with_input(lin.b().clone())
            .unwrap()
            .with_output(lin.c().clone())
            .unwrap();
        let cfg = StabilizerConfig { mode: LyapunovMode::Dense, ..Default::default() };
        let stab = nonlinear_stabilizer(&sys, &cfg).unwrap();
        let basis = diagonal_basis();
        let lrom = stabilized_reduce(&lin, &basis, &stab).unwrap();
        let nrom = nonlinear_reduce(&sys, &basis, Some(&stab)).unwrap();
        assert!((lrom.e() - nrom.e()).amax() < 1e-14);
        assert!((lrom.a() - nrom.jacobian(&DVector::zeros(1))).amax() < 1e-14);
        assert!((lrom.b() - nrom.b().unwrap()).amax() < 1e-14);
        let g = galerkin_reduce(&lin, &basis, None).unwrap();
        let c = nonlinear_reduce(&sys, &basis, None).unwrap();
        assert_eq!(g.a(), &c.jacobian(&DVector::zeros(1)));
    }

    #[test]
    fn newton_finds_forced_equilibrium() {
        let sys = crafted_cubic().with_input(DMatrix::from_column_slice(2, 1, &[1.0, 0.5])).unwrap();
        let bu = DVector::from_vec(vec![1.0, 0.5]);
        let f = sys.vector_field().clone();
        let x = newton_equilibrium(&|x| f(x) + &bu, &|x| sys.jacobian(x), DVector::zeros(2), 50).unwrap();
        let forced = sys.with_constant_input(&DVector::from_element(1, 1.0), x).unwrap();
        let shifted = shift_to_origin(&forced).unwrap();
        assert!(shifted.f(&DVector::zeros(2)).amax() <= 1e-10);
    }
}
