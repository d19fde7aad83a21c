use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynsys::LinearSystem;
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityProfile {
    Uniform { v: f64 },
    /// Linear in `x` from `left` at `x = 0` to `right` at `x = 1`.
    Ramp { left: f64, right: f64 },
}

impl VelocityProfile {
    fn at(&self, x: f64) -> f64 {
        match *self {
            VelocityProfile::Uniform { v } => v,
            VelocityProfile::Ramp { left, right } => left + (right - left) * x,
        }
    }
}

/// Finite volumes on `[0, 1]` with homogeneous Dirichlet ends, upwind
/// convection and cell widths shrinking geometrically downstream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvDiffSpec {
    pub n: usize,
    pub diffusion: f64,
    pub velocity: VelocityProfile,
    /// Ratio of the first to the last cell width (`>= 1`).
    pub grade: f64,
    /// Return `E = I`, `A := E^{-1} A`.
    pub scaled: bool,
    /// Source location.
    pub input_at: f64,
    /// Sensor location.
    pub output_at: f64,
}

impl Default for ConvDiffSpec {
    fn default() -> Self {
        Self {
            n: 400,
            diffusion: 1e-2,
            velocity: VelocityProfile::Uniform { v: 1.0 },
            grade: 8.0,
            scaled: false,
            input_at: 0.25,
            output_at: 0.75,
        }
    }
}

/// Cell widths summing to one, `h_{i+1} / h_i = grade^{-1/(n-1)}`.
pub fn graded_mesh(n: usize, grade: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let rho = grade.powf(-1.0 / (n - 1) as f64);
    let raw: Vec<f64> = (0..n).map(|i| rho.powi(i as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|h| h / total).collect()
}

fn cell_containing(faces: &[f64], x: f64) -> usize {
    let n = faces.len() - 1;
    faces[1..].partition_point(|&f| f <= x).min(n - 1)
}

pub fn gen_convection_diffusion(spec: &ConvDiffSpec) -> Result<LinearSystem> {
    let n = spec.n;
    if n < 2 {
        return Err(Error::InvalidSpec(format!("need at least 2 cells, got {n}")));
    }
    if !(spec.diffusion > 0.0 && spec.diffusion.is_finite()) {
        return Err(Error::InvalidSpec(format!("diffusion must be positive, got {}", spec.diffusion)));
    }
    if !(spec.grade >= 1.0 && spec.grade.is_finite()) {
        return Err(Error::InvalidSpec(format!("mesh grade must be >= 1, got {}", spec.grade)));
    }
    for x in [spec.input_at, spec.output_at] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidSpec(format!("locations must lie in [0, 1], got {x}")));
        }
    }
    let h = graded_mesh(n, spec.grade);
    let mut faces = vec![0.0; n + 1];
    for i in 0..n {
        faces[i + 1] = faces[i] + h[i];
    }
    faces[n] = 1.0;

    let a_diff = spec.diffusion;
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        // Face between i-1 and i (index i) and between i and i+1 (index i+1).
        for (face, nb) in [(i, i.checked_sub(1)), (i + 1, (i + 1 < n).then_some(i + 1))] {
            let dist = match nb {
                Some(j) => 0.5 * (h[i] + h[j]),
                None => 0.5 * h[i],
            };
            let g = a_diff / dist;
            t.push((i, i, -g));
            if let Some(j) = nb {
                t.push((i, j, g));
            }
            // Outward normal is -1 on the left face and +1 on the right face.
            let normal = if face == i { -1.0 } else { 1.0 };
            let vn = spec.velocity.at(faces[face]) * normal;
            if vn > 0.0 {
                t.push((i, i, -vn));
            } else if let Some(j) = nb {
                t.push((i, j, -vn));
            }
        }
    }
    let a = SparseMatrix::from_triplets(n, n, &t)?;

    let src = cell_containing(&faces, spec.input_at);
    let obs = cell_containing(&faces, spec.output_at);
    let mut b = DMatrix::zeros(n, 1);
    b[src] = 1.0;
    let mut c = DMatrix::zeros(1, n);
    c[obs] = 1.0;

    if spec.scaled {
        let inv: Vec<f64> = h.iter().map(|v| 1.0 / v).collect();
        let scale = SparseMatrix::from_diagonal(&inv);
        let a_scaled = SparseMatrix::from_dense(&scale.mul_dense(&a.to_dense()));
        b[src] /= h[src];
        LinearSystem::standard(a_scaled, b, c)
    } else {
        LinearSystem::new(SparseMatrix::from_diagonal(&h), a, b, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{detect_nonnegative_part, spectral_abscissa};

    #[test]
    fn mesh_sums_to_one() {
        let h = graded_mesh(50, 8.0);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((h[0] / h[49] - 8.0).abs() < 1e-10);
    }

    #[test]
    fn pure_diffusion_is_symmetric_and_dissipative() {
        let spec = ConvDiffSpec { n: 60, velocity: VelocityProfile::Uniform { v: 0.0 }, grade: 1.0, ..Default::default() };
        let sys = gen_convection_diffusion(&spec).unwrap();
        assert!(sys.a().is_symmetric(1e-12));
        assert_eq!(detect_nonnegative_part(&sys).unwrap().k, 0);
        assert!(spectral_abscissa(&sys).unwrap() < 0.0);
    }

    #[test]
    fn scaled_and_unscaled_share_spectrum() {
        let spec = ConvDiffSpec { n: 80, ..Default::default() };
        let a1 = spectral_abscissa(&gen_convection_diffusion(&spec).unwrap()).unwrap();
        let a2 = spectral_abscissa(&gen_convection_diffusion(&ConvDiffSpec { scaled: true, ..spec }).unwrap()).unwrap();
        // Upwind operators are far from normal; eigenvalues carry ~1e-7 relative noise.
        assert!((a1 - a2).abs() < 1e-6 * a1.abs(), "{a1} vs {a2}");
    }
}
