use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First line of every CSV written by this crate.
pub const CSV_VERSION: &str = "# stabmor-v1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Columns in the snapshot matrix, when harvesting.
    pub snapshots: usize,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<DVector<f64>>,
    /// States at `t`, if requested.
    pub x: Option<Vec<DVector<f64>>>,
    /// State samples for POD, columns in time order.
    pub snapshots: Option<DMatrix<f64>>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn n_out(&self) -> usize {
        self.y.first().map_or(0, |v| v.len())
    }

    pub fn final_output(&self) -> Option<&DVector<f64>> {
        self.y.last()
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.x.as_ref().and_then(|x| x.last())
    }

    /// Linear interpolation of the output at `t` (clamped to the time span).
    pub fn output_at(&self, t: f64) -> DVector<f64> {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.y[0].clone();
        }
        if t >= self.t[n - 1] {
            return self.y[n - 1].clone();
        }
        let i = self.t.partition_point(|&s| s <= t) - 1;
        let th = (t - self.t[i]) / (self.t[i + 1] - self.t[i]);
        &self.y[i] * (1.0 - th) + &self.y[i + 1] * th
    }

    /// `t,y_1,..,y_m` rows after the version line and header.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        let cols: Vec<String> = (1..=self.n_out()).map(|i| format!("y_{i}")).collect();
        write_csv_header(&mut w, &format!("t,{}", cols.join(",")))?;
        for (t, y) in self.t.iter().zip(&self.y) {
            write!(w, "{t:e}")?;
            for v in y.iter() {
                write!(w, ",{v:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn write_csv_header(mut w: impl Write, columns: &str) -> io::Result<()> {
    writeln!(w, "{CSV_VERSION}")?;
    writeln!(w, "{columns}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputError {
    /// `max_t ||y(t) - ybar(t)||_inf`
    pub max_abs: f64,
    pub per_output: Vec<f64>,
    /// Time of the maximum.
    pub at: f64,
}

/// Maximum output difference. On differing grids the finer trajectory is
/// interpolated to the coarser one when `interpolate` is set.
pub fn output_error(a: &Trajectory, b: &Trajectory, interpolate: bool) -> Result<OutputError> {
    if a.n_out() != b.n_out() {
        return Err(Error::DimensionMismatch(format!("outputs: {} vs {}", a.n_out(), b.n_out())));
    }
    let same = a.t.len() == b.t.len() && a.t.iter().zip(&b.t).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300));
    let (coarse, fine) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if !same && !interpolate {
        return Err(Error::GridMismatch);
    }
    let mut per_output = vec![0.0f64; a.n_out()];
    let (mut max_abs, mut at) = (0.0f64, coarse.t.first().copied().unwrap_or(0.0));
    for (i, &t) in coarse.t.iter().enumerate() {
        let other = if same { fine.y[i].clone() } else { fine.output_at(t) };
        for (j, d) in (&coarse.y[i] - other).iter().enumerate() {
            let d = d.abs();
            per_output[j] = per_output[j].max(d);
            if d > max_abs {
                max_abs = d;
                at = t;
            }
        }
    }
    Ok(OutputError { max_abs, per_output, at })
}
