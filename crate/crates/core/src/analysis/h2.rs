//! `H2` distance of two transfer functions by quadrature on the imaginary axis.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::FrequencyResponse;
use crate::error::{Error, Result};

/// Frequency grid policy. Unset bounds are taken from the poles of both
/// operands: `[10^-below min|p|, 10^above max|p|]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Log-spaced samples in `[omega_min, omega_max]`; `omega = 0` is added.
    pub points: usize,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub decades_below: f64,
    pub decades_above: f64,
    /// Add `omega_max * g(omega_max)` for the part beyond `omega_max`,
    /// exact when the integrand decays like `omega^-2`.
    pub tail: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { points: 2000, omega_min: None, omega_max: None, decades_below: 3.0, decades_above: 3.0, tail: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H2Estimate {
    pub value: f64,
    /// Same quadrature on every other grid point.
    pub half_resolution: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
    pub tail: bool,
}

impl H2Estimate {
    /// `|value - half_resolution|`
    pub fn refinement_delta(&self) -> f64 {
        (self.value - self.half_resolution).abs()
    }
}

/// The zero transfer function.
#[derive(Clone, Copy, Debug)]
pub struct ZeroSystem {
    pub n_in: usize,
    pub n_out: usize,
}

impl FrequencyResponse for ZeroSystem {
    fn n_in(&self) -> usize {
        self.n_in
    }

    fn n_out(&self) -> usize {
        self.n_out
    }

    fn eval(&self, _: Complex64) -> Result<DMatrix<Complex64>> {
        Ok(DMatrix::zeros(self.n_out, self.n_in))
    }

    fn poles(&self) -> Result<Option<Vec<Complex64>>> {
        Ok(Some(Vec::new()))
    }
}

/// Memoizes `H(s)` so that one operand can be shared by many comparisons
/// on the same grid.
pub struct CachedResponse<'a> {
    inner: &'a dyn FrequencyResponse,
    poles: Option<Vec<Complex64>>,
    cache: Mutex<HashMap<(u64, u64), DMatrix<Complex64>>>,
}

impl<'a> CachedResponse<'a> {
    pub fn new(inner: &'a dyn FrequencyResponse) -> Result<Self> {
        Ok(Self { inner, poles: inner.poles()?, cache: Mutex::new(HashMap::new()) })
    }
}

impl FrequencyResponse for CachedResponse<'_> {
    fn n_in(&self) -> usize {
        self.inner.n_in()
    }

    fn n_out(&self) -> usize {
        self.inner.n_out()
    }

    fn eval(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        let key = (s.re.to_bits(), s.im.to_bits());
        if let Some(h) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(h.clone());
        }
        let h = self.inner.eval(s)?;
        self.cache.lock().expect("cache lock").insert(key, h.clone());
        Ok(h)
    }

    fn poles(&self) -> Result<Option<Vec<Complex64>>> {
        Ok(self.poles.clone())
    }
}

fn checked_poles(tf: &dyn FrequencyResponse, which: &'static str) -> Result<Option<Vec<Complex64>>> {
    let poles = tf.poles()?;
    match &poles {
        Some(p) if p.iter().any(|z| z.re >= 0.0) => Err(Error::UnstableOperand(which)),
        None => {
            log::info!("poles of the {which} operand not computed; assuming it is stable");
            Ok(None)
        }
        _ => Ok(poles),
    }
}

fn trapezoid(w: &[f64], g: &[f64]) -> f64 {
    w.windows(2).zip(g.windows(2)).map(|(w, g)| 0.5 * (w[1] - w[0]) * (g[0] + g[1])).sum()
}

/// `||H_a - H_b||_H2`, integrating `||H_a(iw) - H_b(iw)||_F^2` over
/// `[0, omega_max]` and doubling by conjugate symmetry.
pub fn h2_error(a: &dyn FrequencyResponse, b: &dyn FrequencyResponse, grid: &GridConfig) -> Result<H2Estimate> {
    if a.n_in() != b.n_in() || a.n_out() != b.n_out() {
        return Err(Error::DimensionMismatch(format!(
            "transfer functions are {}x{} and {}x{}",
            a.n_out(),
            a.n_in(),
            b.n_out(),
            b.n_in()
        )));
    }
    if grid.points < 3 {
        return Err(Error::InvalidSpec("frequency grid needs at least 3 points".into()));
    }
    let pa = checked_poles(a, "first")?;
    let pb = checked_poles(b, "second")?;
    let mags: Vec<f64> = pa.iter().chain(pb.iter()).flatten().map(|z| z.norm()).filter(|&m| m > 0.0).collect();
    let (lo, hi) = if mags.is_empty() {
        (1.0, 1.0)
    } else {
        (mags.iter().cloned().fold(f64::INFINITY, f64::min), mags.iter().cloned().fold(0.0, f64::max))
    };
    let w_min = grid.omega_min.unwrap_or(lo * 10f64.powf(-grid.decades_below));
    let w_max = grid.omega_max.unwrap_or(hi * 10f64.powf(grid.decades_above));
    if !(w_min > 0.0 && w_max > w_min) {
        return Err(Error::InvalidSpec(format!("invalid frequency band [{w_min}, {w_max}]")));
    }

    let m = grid.points;
    let ratio = (w_max / w_min).ln() / (m - 1) as f64;
    let mut omega = Vec::with_capacity(m + 1);
    omega.push(0.0);
    omega.extend((0..m).map(|i| if i == m - 1 { w_max } else { w_min * (ratio * i as f64).exp() }));

    let g: Vec<f64> = omega
        .par_iter()
        .map(|&w| {
            let s = Complex64::new(0.0, w);
            Ok((a.eval(s)? - b.eval(s)?).norm_squared())
        })
        .collect::<Result<_>>()?;

    let tail = |gm: f64| if grid.tail { w_max * gm } else { 0.0 };
    let full = trapezoid(&omega, &g) + tail(g[m]);
    let keep: Vec<usize> = (0..=m).filter(|&i| i == 0 || i % 2 == 1 || i == m).collect();
    let wh: Vec<f64> = keep.iter().map(|&i| omega[i]).collect();
    let gh: Vec<f64> = keep.iter().map(|&i| g[i]).collect();
    let half = trapezoid(&wh, &gh) + tail(g[m]);

    Ok(H2Estimate {
        value: (full / PI).max(0.0).sqrt(),
        half_resolution: (half / PI).max(0.0).sqrt(),
        omega_min: w_min,
        omega_max: w_max,
        points: m,
        tail: grid.tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::LinearSystem;
    use crate::linalg::SparseMatrix;

    fn lag(p: f64) -> LinearSystem {
        LinearSystem::standard(SparseMatrix::from_diagonal(&[-p]), DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap()
    }

    #[test]
    fn first_order_lag_norm() {
        let est = h2_error(&lag(1.0), &ZeroSystem { n_in: 1, n_out: 1 }, &GridConfig::default()).unwrap();
        assert!((est.value - 0.5f64.sqrt()).abs() < 1e-3, "{}", est.value);
        assert!(est.refinement_delta() < 1e-4);
    }

    #[test]
    fn identical_operands() {
        let s = lag(2.0);
        assert_eq!(h2_error(&s, &s, &GridConfig::default()).unwrap().value, 0.0);
    }

    #[test]
    fn two_lags() {
        // ||1/(s+1) - 1/(s+2)||^2 = 1/2 + 1/4 - 2/3
        let est = h2_error(&lag(1.0), &lag(2.0), &GridConfig::default()).unwrap();
        let exact = (0.5f64 + 0.25 - 2.0 / 3.0).sqrt();
        assert!((est.value - exact).abs() < 1e-4, "{} vs {exact}", est.value);
    }

    #[test]
    fn cache_returns_same_values() {
        let s = lag(1.0);
        let c = CachedResponse::new(&s).unwrap();
        let g = GridConfig::default();
        assert_eq!(h2_error(&c, &lag(2.0), &g).unwrap(), h2_error(&s, &lag(2.0), &g).unwrap());
        assert_eq!(h2_error(&c, &lag(2.0), &g).unwrap(), h2_error(&s, &lag(2.0), &g).unwrap());
    }

    #[test]
    fn unstable_operand_is_rejected() {
        let r = h2_error(&lag(-1.0), &lag(1.0), &GridConfig::default());
        assert!(matches!(r, Err(Error::UnstableOperand("first"))));
    }
}
