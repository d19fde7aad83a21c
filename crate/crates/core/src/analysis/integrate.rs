//! Dormand-Prince 5(4) with PI step control, and the implicit trapezoidal rule.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::trajectory::{IntegratorStats, Trajectory};
use super::{Dynamics, InputSignal};
use crate::error::{Error, Result};
use crate::linalg::{lu_factor, SparseMatrix};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth- minus fourth-order weights.
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Continuous extension of order four.
const DENSE: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPONENT: f64 = 0.2 - 0.75 * BETA;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
    /// Disable error control and take this many equal steps.
    pub fixed_steps: Option<usize>,
    /// Record `refine` dense-output states per step (plus the initial state)
    /// as snapshots.
    pub harvest_refine: Option<usize>,
    /// Report outputs at these times instead of at the accepted steps.
    pub output_times: Option<Vec<f64>>,
    pub store_states: bool,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-9,
            h0: None,
            h_max: None,
            max_steps: 1_000_000,
            fixed_steps: None,
            harvest_refine: None,
            output_times: None,
            store_states: false,
        }
    }
}

struct Rk<'a> {
    sys: &'a dyn Dynamics,
    u: &'a InputSignal,
    evals: usize,
}

impl Rk<'_> {
    fn deriv(&mut self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.evals += 1;
        let u = self.u.eval(t, self.sys.n_in());
        self.sys.solve_mass(&self.sys.rhs(x, &u))
    }

    /// One step from `(t, x)` with `k[0] = x'(t)`; fills `k[1..7]` and returns
    /// the new state and the error estimate.
    fn step(&mut self, t: f64, x: &DVector<f64>, h: f64, k: &mut [DVector<f64>; 7]) -> (DVector<f64>, DVector<f64>) {
        for s in 1..7 {
            let mut xs = x.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    xs.axpy(h * A[s][j], kj, 1.0);
                }
            }
            k[s] = self.deriv(t + C[s] * h, &xs);
            if s == 6 {
                let mut err = DVector::zeros(x.len());
                for (j, kj) in k.iter().enumerate() {
                    if ERR[j] != 0.0 {
                        err.axpy(h * ERR[j], kj, 1.0);
                    }
                }
                return (xs, err);
            }
        }
        unreachable!()
    }
}

/// Dense output on `[t, t + h]` at fraction `theta`.
fn interpolate(x: &DVector<f64>, x_new: &DVector<f64>, k: &[DVector<f64>; 7], h: f64, theta: f64) -> DVector<f64> {
    let diff = x_new - x;
    let bspl = &k[0] * h - &diff;
    let r4 = &diff - &k[6] * h - &bspl;
    let mut r5 = DVector::zeros(x.len());
    for (j, kj) in k.iter().enumerate() {
        if DENSE[j] != 0.0 {
            r5.axpy(h * DENSE[j], kj, 1.0);
        }
    }
    let s = 1.0 - theta;
    x + (diff + (bspl + (r4 + r5 * s) * theta) * s) * theta
}

fn error_norm(err: &DVector<f64>, x: &DVector<f64>, x_new: &DVector<f64>, rtol: f64, atol: f64) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = (0..err.len())
        .map(|i| {
            let sk = atol + rtol * x[i].abs().max(x_new[i].abs());
            (err[i] / sk).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step(rk: &mut Rk<'_>, x0: &DVector<f64>, f0: &DVector<f64>, opts: &AdaptiveOptions) -> f64 {
    let scale = x0.map(|v| opts.atol + opts.rtol * v.abs());
    let rms = |v: &DVector<f64>| (v.component_div(&scale).norm_squared() / v.len().max(1) as f64).sqrt();
    let (d0, d1) = (rms(x0), rms(f0));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let x1 = x0 + f0 * h0;
    let f1 = rk.deriv(h0, &x1);
    let d2 = rms(&(f1 - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1)
}

/// Embedded 5(4) Runge-Kutta integration of `E x' = g(x, u(t))` on `[0, t_end]`.
pub fn integrate_adaptive(
    sys: &dyn Dynamics,
    u: &InputSignal,
    x0: &DVector<f64>,
    t_end: f64,
    opts: &AdaptiveOptions,
) -> Result<Trajectory> {
    let n = sys.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("x0 has length {}, system dimension {n}", x0.len())));
    }
    if !(t_end > 0.0) {
        return Err(Error::InvalidSpec(format!("final time must be positive, got {t_end}")));
    }
    let out_times = opts.output_times.clone();
    if let Some(ts) = &out_times {
        if ts.windows(2).any(|w| w[1] <= w[0]) || ts.iter().any(|&t| t < 0.0 || t > t_end) {
            return Err(Error::InvalidSpec("output times must be increasing and inside [0, T]".into()));
        }
    }

    let mut rk = Rk { sys, u, evals: 0 };
    let mut traj = Trajectory { t: Vec::new(), y: Vec::new(), x: opts.store_states.then(Vec::new), snapshots: None, stats: IntegratorStats::default() };
    let record = |traj: &mut Trajectory, t: f64, x: &DVector<f64>| {
        traj.t.push(t);
        traj.y.push(sys.output(x));
        if let Some(xs) = traj.x.as_mut() {
            xs.push(x.clone());
        }
    };
    let mut snaps: Vec<DVector<f64>> = Vec::new();
    if opts.harvest_refine.is_some() {
        snaps.push(x0.clone());
    }
    let mut next_out = 0usize;
    match &out_times {
        None => record(&mut traj, 0.0, x0),
        Some(ts) => {
            while next_out < ts.len() && ts[next_out] <= 0.0 {
                record(&mut traj, ts[next_out], x0);
                next_out += 1;
            }
        }
    }

    let breaks = u.breakpoints(t_end);
    let mut t = 0.0;
    let mut x = x0.clone();
    let mut k: [DVector<f64>; 7] = std::array::from_fn(|_| DVector::zeros(n));
    k[0] = rk.deriv(0.0, &x);

    let fixed_h = opts.fixed_steps.map(|s| t_end / s.max(1) as f64);
    let h_max = opts.h_max.unwrap_or(t_end);
    let mut h = match (fixed_h, opts.h0) {
        (Some(h), _) => h,
        (None, Some(h)) => h,
        (None, None) => initial_step(&mut rk, &x, &k[0].clone(), opts),
    }
    .min(h_max);
    let mut err_old: f64 = 1e-4;
    let mut rejected_last = false;

    loop {
        let remaining = t_end - t;
        if remaining <= 1e-14 * t_end {
            break;
        }
        if traj.stats.steps + traj.stats.rejected >= opts.max_steps {
            return Err(Error::ConvergenceFailure { what: "adaptive integration", iterations: opts.max_steps, best_residual: remaining });
        }
        let mut h_try = h.min(remaining);
        if let Some(&b) = breaks.iter().find(|&&b| b > t * (1.0 + 1e-14) + 1e-300) {
            if t + h_try > b {
                h_try = b - t;
            }
        }
        if fixed_h.is_none() && h_try < 1e-14 * t.abs().max(t_end) {
            return Err(Error::StepSizeUnderflow { t, h: h_try });
        }

        let (x_new, err) = rk.step(t, &x, h_try, &mut k);
        let err_n = if fixed_h.is_some() { 0.0 } else { error_norm(&err, &x, &x_new, opts.rtol, opts.atol) };
        if !err_n.is_finite() {
            traj.stats.rejected += 1;
            h = h_try * MIN_FACTOR;
            rejected_last = true;
            continue;
        }
        if err_n <= 1.0 {
            let t_new = if (t + h_try - t_end).abs() <= 1e-14 * t_end { t_end } else { t + h_try };
            if let Some(refine) = opts.harvest_refine {
                for j in 1..=refine.max(1) {
                    let th = j as f64 / refine.max(1) as f64;
                    snaps.push(if j == refine { x_new.clone() } else { interpolate(&x, &x_new, &k, h_try, th) });
                }
            }
            match &out_times {
                None => record(&mut traj, t_new, &x_new),
                Some(ts) => {
                    while next_out < ts.len() && ts[next_out] <= t_new {
                        let th = ((ts[next_out] - t) / h_try).clamp(0.0, 1.0);
                        let xi = interpolate(&x, &x_new, &k, h_try, th);
                        record(&mut traj, ts[next_out], &xi);
                        next_out += 1;
                    }
                }
            }
            traj.stats.steps += 1;
            t = t_new;
            x = x_new;
            k[0] = k[6].clone();
            if fixed_h.is_none() {
                let fac11 = err_n.powf(EXPONENT);
                let fac = (fac11 / err_old.powf(BETA) / SAFETY).clamp(1.0 / MAX_FACTOR, 1.0 / MIN_FACTOR);
                let mut h_new = h_try / fac;
                if rejected_last {
                    h_new = h_new.min(h_try);
                }
                err_old = err_n.max(1e-4);
                h = h_new.min(h_max);
                rejected_last = false;
            }
        } else {
            let fac11 = err_n.powf(EXPONENT);
            h = h_try / (fac11 / SAFETY).min(1.0 / MIN_FACTOR);
            traj.stats.rejected += 1;
            rejected_last = true;
        }
    }

    if let Some(ts) = &out_times {
        while next_out < ts.len() {
            record(&mut traj, ts[next_out], &x);
            next_out += 1;
        }
    }
    if opts.harvest_refine.is_some() {
        traj.stats.snapshots = snaps.len();
        traj.snapshots = Some(DMatrix::from_columns(&snaps));
    }
    traj.stats.rhs_evals = rk.evals;
    Ok(traj)
}

/// Trapezoidal rule with `steps` equal steps. Linear systems factor
/// `E - h/2 A` once; nonlinear ones run Newton per step.
pub fn integrate_trapezoidal(
    sys: &dyn Dynamics,
    u: &InputSignal,
    x0: &DVector<f64>,
    t_end: f64,
    steps: usize,
    store_states: bool,
) -> Result<Trajectory> {
    let n = sys.dim();
    if steps == 0 {
        return Err(Error::InvalidSpec("trapezoidal rule needs at least one step".into()));
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("x0 has length {}, system dimension {n}", x0.len())));
    }
    let h = t_end / steps as f64;
    let m = sys.n_in();
    let e = sys.mass();
    let linear_lu = if sys.is_linear() {
        let a = sys.jacobian(x0);
        Some(lu_factor(&SparseMatrix::combine(1.0, &e, -0.5 * h, &a))?)
    } else {
        None
    };

    let mut traj = Trajectory { t: Vec::with_capacity(steps + 1), y: Vec::with_capacity(steps + 1), x: store_states.then(Vec::new), snapshots: None, stats: IntegratorStats::default() };
    let mut x = x0.clone();
    let mut g_old = sys.rhs(&x, &u.eval(0.0, m));
    traj.stats.rhs_evals += 1;
    traj.t.push(0.0);
    traj.y.push(sys.output(&x));
    if let Some(xs) = traj.x.as_mut() {
        xs.push(x.clone());
    }

    for i in 1..=steps {
        let t = if i == steps { t_end } else { i as f64 * h };
        let u_new = u.eval(t, m);
        let x_new = match &linear_lu {
            Some(lu) => {
                // g(0, u) = B u for linear systems.
                let bu = sys.rhs(&DVector::zeros(n), &u_new);
                lu.solve(&(e.mul_vec(&x) + (&g_old + bu) * (0.5 * h)))
            }
            None => newton_step(sys, &e, &x, &g_old, &u_new, h, &mut traj.stats)?,
        };
        g_old = sys.rhs(&x_new, &u_new);
        traj.stats.rhs_evals += 1;
        traj.stats.steps += 1;
        x = x_new;
        traj.t.push(t);
        traj.y.push(sys.output(&x));
        if let Some(xs) = traj.x.as_mut() {
            xs.push(x.clone());
        }
    }
    Ok(traj)
}

fn newton_step(
    sys: &dyn Dynamics,
    e: &SparseMatrix,
    x: &DVector<f64>,
    g_old: &DVector<f64>,
    u_new: &DVector<f64>,
    h: f64,
    stats: &mut IntegratorStats,
) -> Result<DVector<f64>> {
    let base = e.mul_vec(x) + g_old * (0.5 * h);
    let mut z = x + sys.solve_mass(g_old) * h;
    let mut best = f64::INFINITY;
    for _ in 0..30 {
        let g = sys.rhs(&z, u_new);
        stats.rhs_evals += 1;
        let res = e.mul_vec(&z) - g * (0.5 * h) - &base;
        let lu = lu_factor(&SparseMatrix::combine(1.0, e, -0.5 * h, &sys.jacobian(&z)))?;
        let dz = lu.solve(&res);
        z -= &dz;
        best = best.min(dz.amax());
        if dz.amax() <= 1e-12 * (1.0 + z.amax()) {
            return Ok(z);
        }
    }
    Err(Error::ConvergenceFailure { what: "trapezoidal Newton iteration", iterations: 30, best_residual: best })
}
