use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynsys::{detect_nonnegative_part, LinearSystem};
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// `A = T Lambda T^{-1}` with `T = U diag(sigma) W^T`, `sigma` log-spaced in
/// `[1, kappa]` and `U`, `W` Haar-random orthogonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonNormalSpec {
    pub n: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    /// Random diagonal `E` in `[0.5, 2]`; then `A = E T Lambda T^{-1}`.
    pub descriptor: bool,
    /// Resample until the symmetric part has a non-negative eigenvalue.
    pub require_nondissipative: bool,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for NonNormalSpec {
    fn default() -> Self {
        Self {
            n: 100,
            lambda_min: 0.1,
            lambda_max: 10.0,
            kappa: 50.0,
            descriptor: false,
            require_nondissipative: true,
            max_attempts: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NonNormalSystem {
    pub system: LinearSystem,
    /// Prescribed eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub k: usize,
    pub attempts: usize,
}

fn haar_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // Sign fix makes the distribution Haar.
    let signs = DVector::from_fn(n, |i, _| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 });
    q * DMatrix::from_diagonal(&signs)
}

pub fn gen_nonnormal_stable(spec: &NonNormalSpec) -> Result<NonNormalSystem> {
    let n = spec.n;
    if n == 0 {
        return Err(Error::InvalidSpec("dimension must be at least 1".into()));
    }
    if !(spec.lambda_min > 0.0 && spec.lambda_max >= spec.lambda_min && spec.lambda_max.is_finite()) {
        return Err(Error::InvalidSpec(format!("need 0 < lambda_min <= lambda_max, got [{}, {}]", spec.lambda_min, spec.lambda_max)));
    }
    if !(spec.kappa >= 1.0 && spec.kappa.is_finite()) {
        return Err(Error::InvalidSpec(format!("kappa must be >= 1, got {}", spec.kappa)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let attempts = spec.max_attempts.max(1);
    for attempt in 1..=attempts {
        let (lmin, lmax) = (spec.lambda_min.ln(), spec.lambda_max.ln());
        let mut lambda: Vec<f64> = (0..n).map(|_| -(lmin + (lmax - lmin) * rng.random::<f64>()).exp()).collect();
        lambda.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let u = haar_orthogonal(n, &mut rng);
        let w = haar_orthogonal(n, &mut rng);
        let sigma: Vec<f64> = (0..n)
            .map(|i| if n == 1 { 1.0 } else { spec.kappa.powf(i as f64 / (n - 1) as f64) })
            .collect();
        // T Lambda T^{-1} = U S W^T Lambda W S^{-1} U^T
        let s = DMatrix::from_diagonal(&DVector::from_vec(sigma.clone()));
        let s_inv = DMatrix::from_diagonal(&DVector::from_iterator(n, sigma.iter().map(|v| 1.0 / v)));
        let core = w.transpose() * DMatrix::from_diagonal(&DVector::from_vec(lambda.clone())) * &w;
        let mut a = &u * s * core * s_inv * u.transpose();
        let e_diag: Vec<f64> = if spec.descriptor { (0..n).map(|_| rng.random_range(0.5..2.0)).collect() } else { vec![1.0; n] };
        if spec.descriptor {
            for (i, &d) in e_diag.iter().enumerate() {
                a.row_mut(i).scale_mut(d);
            }
        }
        let b = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = DMatrix::from_fn(1, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = if spec.descriptor { SparseMatrix::from_diagonal(&e_diag) } else { SparseMatrix::identity(n) };
        let system = LinearSystem::new(e, SparseMatrix::from_dense(&a), b, c)?;
        let k = detect_nonnegative_part(&system)?.k;
        if k >= 1 || !spec.require_nondissipative {
            return Ok(NonNormalSystem { system, eigenvalues: lambda, k, attempts: attempt });
        }
        log::debug!("non-normal draw {attempt} is dissipative; resampling");
    }
    Err(Error::ResampleExhausted { attempts })
}
