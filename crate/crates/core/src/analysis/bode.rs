use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use super::trajectory::write_csv_header;
use crate::dynsys::FrequencyResponse;
use crate::error::{Error, Result};

/// Magnitude (dB) and phase (degrees) of every `H_ij(i w)` on a log grid.
/// Samples that hit a pole are kept as gaps.
#[derive(Clone, Debug)]
pub struct BodeTable {
    pub n_in: usize,
    pub n_out: usize,
    pub omega: Vec<f64>,
    /// Per frequency, `(mag_db, phase_deg)` for each entry in row-major order.
    pub values: Vec<Option<Vec<(f64, f64)>>>,
}

pub fn bode_data(tf: &dyn FrequencyResponse, omega_min: f64, omega_max: f64, points: usize) -> Result<BodeTable> {
    if !(omega_min > 0.0 && omega_max >= omega_min) || points == 0 {
        return Err(Error::InvalidSpec(format!("invalid Bode range [{omega_min}, {omega_max}] with {points} points")));
    }
    let omega: Vec<f64> = if points == 1 {
        vec![omega_min]
    } else {
        let step = (omega_max / omega_min).ln() / (points - 1) as f64;
        (0..points).map(|i| if i == points - 1 { omega_max } else { omega_min * (step * i as f64).exp() }).collect()
    };
    let raw: Vec<Option<Vec<Complex64>>> = omega
        .par_iter()
        .map(|&w| match tf.eval(Complex64::new(0.0, w)) {
            Ok(h) => Ok(Some(h.transpose().iter().cloned().collect())),
            Err(Error::PoleHit { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;

    let entries = tf.n_in() * tf.n_out();
    let mut last_phase: Vec<Option<f64>> = vec![None; entries];
    let values = raw
        .into_iter()
        .map(|row| {
            row.map(|h| {
                h.iter()
                    .enumerate()
                    .map(|(k, z)| {
                        let mut ph = z.arg().to_degrees();
                        if let Some(prev) = last_phase[k] {
                            ph -= 360.0 * ((ph - prev) / 360.0).round();
                        }
                        last_phase[k] = Some(ph);
                        (20.0 * z.norm().log10(), ph)
                    })
                    .collect()
            })
        })
        .collect();
    Ok(BodeTable { n_in: tf.n_in(), n_out: tf.n_out(), omega, values })
}

impl BodeTable {
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        let header = if self.n_in * self.n_out == 1 {
            "omega,mag_db,phase_deg".to_string()
        } else {
            let mut cols = vec!["omega".to_string()];
            for i in 1..=self.n_out {
                for j in 1..=self.n_in {
                    cols.push(format!("mag_db_{i}_{j}"));
                    cols.push(format!("phase_deg_{i}_{j}"));
                }
            }
            cols.join(",")
        };
        write_csv_header(&mut w, &header)?;
        let entries = self.n_in * self.n_out;
        for (om, row) in self.omega.iter().zip(&self.values) {
            write!(w, "{om:e}")?;
            match row {
                Some(vals) => {
                    for (m, p) in vals {
                        write!(w, ",{m:e},{p:e}")?;
                    }
                }
                None => {
                    for _ in 0..entries {
                        write!(w, ",NA,NA")?;
                    }
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
