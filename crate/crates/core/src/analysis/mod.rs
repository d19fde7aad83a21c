//! Time- and frequency-domain evaluation of full and reduced models.

mod bode;
mod h2;
mod integrate;
mod trajectory;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynsys::LinearSystem;
use crate::linalg::SparseMatrix;
use crate::nonlinear::{NonlinearRom, NonlinearSystem};
use crate::projection::ReducedSystem;

pub use bode::{bode_data, BodeTable};
pub use h2::{h2_error, CachedResponse, GridConfig, H2Estimate, ZeroSystem};
pub use integrate::{integrate_adaptive, integrate_trapezoidal, AdaptiveOptions};
pub use trajectory::{output_error, write_csv_header, IntegratorStats, OutputError, Trajectory, CSV_VERSION};

/// `E x' = g(x, u)`, `y = h(x)`.
pub trait Dynamics: Sync {
    fn dim(&self) -> usize;
    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;
    /// `g(x, u)`
    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `E^{-1} v`
    fn solve_mass(&self, v: &DVector<f64>) -> DVector<f64>;
    fn mass(&self) -> SparseMatrix;
    /// `dg/dx`
    fn jacobian(&self, x: &DVector<f64>) -> SparseMatrix;
    fn output(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Whether `g(x, u) = A x + B u` with constant `A`.
    fn is_linear(&self) -> bool {
        false
    }
}

impl Dynamics for LinearSystem {
    fn dim(&self) -> usize {
        self.n()
    }

    fn n_in(&self) -> usize {
        LinearSystem::n_in(self)
    }

    fn n_out(&self) -> usize {
        LinearSystem::n_out(self)
    }

    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.a().mul_vec(x) + self.b() * u
    }

    fn solve_mass(&self, v: &DVector<f64>) -> DVector<f64> {
        self.e_solve(v)
    }

    fn mass(&self) -> SparseMatrix {
        self.e().clone()
    }

    fn jacobian(&self, _: &DVector<f64>) -> SparseMatrix {
        self.a().clone()
    }

    fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        self.c() * x
    }

    fn is_linear(&self) -> bool {
        true
    }
}

impl Dynamics for ReducedSystem {
    fn dim(&self) -> usize {
        self.r()
    }

    fn n_in(&self) -> usize {
        self.b().ncols()
    }

    fn n_out(&self) -> usize {
        self.c().nrows()
    }

    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.a() * x + self.b() * u
    }

    fn solve_mass(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = nalgebra::DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        DVector::from_column_slice(self.e_solve(&m).as_slice())
    }

    fn mass(&self) -> SparseMatrix {
        SparseMatrix::from_dense(self.e())
    }

    fn jacobian(&self, _: &DVector<f64>) -> SparseMatrix {
        SparseMatrix::from_dense(self.a())
    }

    fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        self.c() * x
    }

    fn is_linear(&self) -> bool {
        true
    }
}

impl Dynamics for NonlinearSystem {
    fn dim(&self) -> usize {
        self.n()
    }

    fn n_in(&self) -> usize {
        NonlinearSystem::n_in(self)
    }

    fn n_out(&self) -> usize {
        NonlinearSystem::n_out(self)
    }

    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let fx = self.f(x);
        match self.b() {
            Some(b) => fx + b * u,
            None => fx,
        }
    }

    fn solve_mass(&self, v: &DVector<f64>) -> DVector<f64> {
        self.e_solve(v)
    }

    fn mass(&self) -> SparseMatrix {
        self.e().clone()
    }

    fn jacobian(&self, x: &DVector<f64>) -> SparseMatrix {
        NonlinearSystem::jacobian(self, x)
    }

    fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        NonlinearSystem::output(self, x)
    }
}

impl Dynamics for NonlinearRom {
    fn dim(&self) -> usize {
        self.r()
    }

    fn n_in(&self) -> usize {
        NonlinearRom::n_in(self)
    }

    fn n_out(&self) -> usize {
        NonlinearRom::n_out(self)
    }

    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let fx = self.f(x);
        match self.b() {
            Some(b) => fx + b * u,
            None => fx,
        }
    }

    fn solve_mass(&self, v: &DVector<f64>) -> DVector<f64> {
        self.e_solve(v)
    }

    fn mass(&self) -> SparseMatrix {
        SparseMatrix::from_dense(self.e())
    }

    fn jacobian(&self, x: &DVector<f64>) -> SparseMatrix {
        SparseMatrix::from_dense(&NonlinearRom::jacobian(self, x))
    }

    fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        NonlinearRom::output(self, x)
    }
}

/// Built-in scalar input shapes, applied to every input channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    Zero,
    Constant { value: f64 },
    /// `amplitude` for `t >= t0`, zero before.
    Step { amplitude: f64, t0: f64 },
    /// `amplitude * sin(2 pi t / period)`
    Sine { amplitude: f64, period: f64 },
}

impl InputSpec {
    pub fn scalar(&self, t: f64) -> f64 {
        match *self {
            InputSpec::Zero => 0.0,
            InputSpec::Constant { value } => value,
            InputSpec::Step { amplitude, t0 } => {
                if t >= t0 {
                    amplitude
                } else {
                    0.0
                }
            }
            InputSpec::Sine { amplitude, period } => amplitude * (2.0 * PI * t / period).sin(),
        }
    }
}

#[derive(Clone)]
pub enum InputSignal {
    Builtin(InputSpec),
    Custom(Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>),
}

impl fmt::Debug for InputSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSignal::Builtin(s) => write!(f, "{s:?}"),
            InputSignal::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl From<InputSpec> for InputSignal {
    fn from(s: InputSpec) -> Self {
        InputSignal::Builtin(s)
    }
}

impl InputSignal {
    pub fn zero() -> Self {
        InputSignal::Builtin(InputSpec::Zero)
    }

    pub fn custom(f: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static) -> Self {
        InputSignal::Custom(Arc::new(f))
    }

    /// `u(t)` with `m` channels.
    pub fn eval(&self, t: f64, m: usize) -> DVector<f64> {
        match self {
            InputSignal::Builtin(s) => DVector::from_element(m, s.scalar(t)),
            InputSignal::Custom(f) => f(t),
        }
    }

    /// Times at which the input is discontinuous inside `(0, t_end)`.
    pub(crate) fn breakpoints(&self, t_end: f64) -> Vec<f64> {
        match self {
            InputSignal::Builtin(InputSpec::Step { t0, .. }) if *t0 > 0.0 && *t0 < t_end => vec![*t0],
            _ => Vec::new(),
        }
    }
}

/// `||u||_{L2(0,T)}` by composite trapezoid on `samples` equal intervals.
/// Inputs are truncated at `T`.
pub fn input_l2_norm(u: &InputSignal, m: usize, t_end: f64, samples: usize) -> f64 {
    let samples = samples.max(1);
    let h = t_end / samples as f64;
    let mut acc = 0.0;
    for i in 0..=samples {
        let w = if i == 0 || i == samples { 0.5 } else { 1.0 };
        acc += w * u.eval(i as f64 * h, m).norm_squared();
    }
    (acc * h).sqrt()
}
