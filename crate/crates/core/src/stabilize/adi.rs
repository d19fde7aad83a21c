//! Low-rank ADI for `A^T X E + E^T X A + Ut Ut^T = 0` with `X ~ Z Z^T`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynsys::LinearSystem;
use crate::error::{Error, Result};
use crate::linalg::{lu_factor, real_schur, spectral_norm, LuFactorization, SparseMatrix, Tolerances};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdiOptions {
    /// Step cap; a complex pair counts as two steps.
    pub max_steps: usize,
    /// Stop once `||W^T W|| / ||Ut^T Ut||` drops to this value.
    pub tol: f64,
    /// Explicit shifts (left half-plane, closed under conjugation). `None` uses the heuristic.
    pub shifts: Option<Vec<(f64, f64)>>,
    pub num_shifts: usize,
    /// Arnoldi steps on `E^{-1} A` and on `A^{-1} E` for the shift heuristic.
    pub arnoldi_steps: usize,
    pub inverse_arnoldi_steps: usize,
}

impl Default for AdiOptions {
    fn default() -> Self {
        Self { max_steps: 10, tol: 1e-8, shifts: None, num_shifts: 10, arnoldi_steps: 20, inverse_arnoldi_steps: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct AdiResult {
    pub z: DMatrix<f64>,
    /// Relative residual after each step (a complex pair contributes one entry per step).
    pub residual_history: Vec<f64>,
    pub steps: usize,
    pub shifts: Vec<Complex64>,
}

enum Factor {
    Real(LuFactorization<f64>),
    Complex(LuFactorization<Complex64>),
}

fn factor_shift(sys: &LinearSystem, p: Complex64) -> Result<Factor> {
    if p.im == 0.0 {
        Ok(Factor::Real(lu_factor(&SparseMatrix::combine(1.0, sys.a(), p.re, sys.e()))?))
    } else {
        let one = Complex64::new(1.0, 0.0);
        Ok(Factor::Complex(lu_factor(&SparseMatrix::combine(one, sys.a(), p, sys.e()))?))
    }
}

/// Factor `A + p E`; a singular factorization gets one retry with a nudged shift.
fn factor_with_retry(sys: &LinearSystem, p: Complex64) -> Result<(Factor, Complex64)> {
    match factor_shift(sys, p) {
        Ok(f) => Ok((f, p)),
        Err(Error::SingularMatrix { .. }) => {
            let nudged = p * (1.0 + 1e-6);
            log::warn!("ADI shift {p} hit an eigenvalue; retrying with {nudged}");
            match factor_shift(sys, nudged) {
                Ok(f) => Ok((f, nudged)),
                Err(Error::SingularMatrix { .. }) => Err(Error::ShiftFailure { shift: format!("{p}") }),
                Err(e) => Err(e),
            }
        }
        Err(e) => Err(e),
    }
}

pub fn solve_lyapunov_lradi(sys: &LinearSystem, u_tilde: &DMatrix<f64>, opts: &AdiOptions) -> Result<AdiResult> {
    let n = sys.n();
    if u_tilde.nrows() != n {
        return Err(Error::DimensionMismatch(format!("right-hand factor has {} rows, n = {n}", u_tilde.nrows())));
    }
    let k = u_tilde.ncols();
    if k == 0 {
        return Ok(AdiResult { z: DMatrix::zeros(n, 0), residual_history: Vec::new(), steps: 0, shifts: Vec::new() });
    }
    let shifts = match &opts.shifts {
        Some(list) => list.iter().map(|&(re, im)| Complex64::new(re, im)).collect(),
        None => penzl_shifts(sys, opts.num_shifts, opts.arnoldi_steps, opts.inverse_arnoldi_steps)?,
    };
    validate_shifts(&shifts)?;

    let norm0 = spectral_norm(u_tilde).powi(2);
    let mut w = u_tilde.clone();
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut history = Vec::new();
    let mut factors: HashMap<usize, (Factor, Complex64)> = HashMap::new();
    let mut steps = 0;
    let mut idx = 0;

    while steps < opts.max_steps {
        let slot = idx % shifts.len();
        if !factors.contains_key(&slot) {
            factors.insert(slot, factor_with_retry(sys, shifts[slot])?);
        }
        let (factor, p) = &factors[&slot];
        match factor {
            Factor::Real(lu) => {
                let p = p.re;
                let v = lu.solve_transpose_matrix(&w);
                w -= sys.e().tr_mul_dense(&v) * (2.0 * p);
                blocks.push(v * (-2.0 * p).sqrt());
                steps += 1;
                idx += 1;
                history.push(spectral_norm(&w).powi(2) / norm0);
            }
            Factor::Complex(lu) => {
                let mut vr = DMatrix::zeros(n, k);
                let mut vi = DMatrix::zeros(n, k);
                for j in 0..k {
                    let rhs: Vec<Complex64> = w.column(j).iter().map(|&x| Complex64::new(x, 0.0)).collect();
                    let x = lu.solve_transpose_slice(&rhs);
                    for (i, z) in x.iter().enumerate() {
                        vr[(i, j)] = z.re;
                        vi[(i, j)] = z.im;
                    }
                }
                let gamma = 2.0 * (-p.re).sqrt();
                let delta = p.re / p.im;
                let comb = &vr + &vi * delta;
                // The intermediate residual after the first half of the pair is complex; record the pair end only.
                w += sys.e().tr_mul_dense(&comb) * (gamma * gamma);
                blocks.push(comb * gamma);
                blocks.push(vi * (gamma * (delta * delta + 1.0).sqrt()));
                steps += 2;
                idx += 2;
                let res = spectral_norm(&w).powi(2) / norm0;
                history.push(res);
                history.push(res);
            }
        }
        let last = *history.last().unwrap();
        log::debug!("ADI step {steps}: relative residual {last:.3e}");
        if last <= opts.tol {
            break;
        }
    }

    let q: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut z = DMatrix::zeros(n, q);
    let mut col = 0;
    for b in &blocks {
        z.columns_mut(col, b.ncols()).copy_from(b);
        col += b.ncols();
    }
    Ok(AdiResult { z, residual_history: history, steps, shifts })
}

fn validate_shifts(shifts: &[Complex64]) -> Result<()> {
    if shifts.is_empty() {
        return Err(Error::InvalidSpec("ADI needs at least one shift".into()));
    }
    let mut i = 0;
    while i < shifts.len() {
        let p = shifts[i];
        if !(p.re < 0.0) || !p.re.is_finite() || !p.im.is_finite() {
            return Err(Error::InvalidSpec(format!("ADI shift {p} is not in the open left half-plane")));
        }
        if p.im != 0.0 {
            let partner_ok = i + 1 < shifts.len() && (shifts[i + 1] - p.conj()).norm() <= 1e-12 * p.norm();
            if !partner_ok {
                return Err(Error::InvalidSpec(format!("complex ADI shift {p} must be followed by its conjugate")));
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    Ok(())
}

/// Ritz values of `op` from `steps` Arnoldi iterations started at the ones vector.
fn ritz_values(n: usize, steps: usize, op: impl Fn(&DVector<f64>) -> DVector<f64>) -> Result<Vec<Complex64>> {
    let m = steps.min(n);
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut v = DMatrix::<f64>::zeros(n, m + 1);
    let mut h = DMatrix::<f64>::zeros(m + 1, m);
    v.set_column(0, &DVector::from_element(n, 1.0 / (n as f64).sqrt()));
    let mut size = m;
    for j in 0..m {
        let mut w = op(&v.column(j).into_owned());
        let before = w.norm();
        for i in 0..=j {
            let hij = v.column(i).dot(&w);
            h[(i, j)] = hij;
            w.axpy(-hij, &v.column(i), 1.0);
        }
        // Second pass folded into the coefficients.
        for i in 0..=j {
            let c = v.column(i).dot(&w);
            h[(i, j)] += c;
            w.axpy(-c, &v.column(i), 1.0);
        }
        let beta = w.norm();
        h[(j + 1, j)] = beta;
        if beta <= 1e-12 * before.max(f64::MIN_POSITIVE) {
            size = j + 1;
            break;
        }
        v.set_column(j + 1, &(w / beta));
    }
    let hm = h.view((0, 0), (size, size)).into_owned();
    Ok(real_schur(&hm, &Tolerances::default())?.eigenvalues)
}

/// Penzl's heuristic: Ritz values of `E^{-1} A` and reciprocals of Ritz values
/// of `A^{-1} E`, restricted to the open left half-plane, then greedily
/// thinned to `count` shifts that minimize the ADI rational function over the
/// candidate set. Complex shifts come in adjacent conjugate pairs.
pub fn penzl_shifts(sys: &LinearSystem, count: usize, kp: usize, km: usize) -> Result<Vec<Complex64>> {
    let n = sys.n();
    let mut cand = ritz_values(n, kp, |x| sys.e_solve(&sys.a().mul_vec(x)))?;
    if km > 0 {
        if let Ok(a_lu) = lu_factor(sys.a()) {
            let inv = ritz_values(n, km, |x| a_lu.solve(&sys.e().mul_vec(x)))?;
            cand.extend(inv.into_iter().filter(|z| z.norm() > 0.0).map(|z| 1.0 / z));
        }
    }
    let mut cand: Vec<Complex64> = cand
        .into_iter()
        .filter(|z| z.re < 0.0 && z.re.is_finite() && z.im.is_finite())
        .map(|z| if z.im.abs() <= 1e-12 * z.norm() { Complex64::new(z.re, 0.0) } else { z })
        .collect();
    if cand.is_empty() {
        return Err(Error::ConvergenceFailure { what: "ADI shift heuristic (no stable Ritz values)", iterations: kp + km, best_residual: f64::NAN });
    }
    cand.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(select_minmax(&cand, count.max(1)))
}

fn rho(shifts: &[Complex64], x: Complex64) -> f64 {
    shifts.iter().map(|&p| ((x - p) / (x + p)).norm()).product()
}

fn push_with_partner(out: &mut Vec<Complex64>, p: Complex64) {
    if p.im == 0.0 {
        out.push(p);
    } else {
        let upper = Complex64::new(p.re, p.im.abs());
        out.push(upper);
        out.push(upper.conj());
    }
}

fn select_minmax(cand: &[Complex64], count: usize) -> Vec<Complex64> {
    let mut out = Vec::new();
    // First shift: the candidate minimizing the worst single-shift factor.
    let first = cand
        .iter()
        .copied()
        .min_by(|&p, &q| {
            let fp = cand.iter().map(|&x| rho(&[p], x)).fold(0.0, f64::max);
            let fq = cand.iter().map(|&x| rho(&[q], x)).fold(0.0, f64::max);
            fp.total_cmp(&fq)
        })
        .expect("non-empty candidate set");
    push_with_partner(&mut out, first);
    while out.len() < count {
        let worst = cand.iter().copied().max_by(|&a, &b| rho(&out, a).total_cmp(&rho(&out, b))).unwrap();
        if rho(&out, worst) == 0.0 {
            break;
        }
        push_with_partner(&mut out, worst);
    }
    out
}
