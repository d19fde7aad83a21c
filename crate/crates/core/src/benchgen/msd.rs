use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynsys::LinearSystem;
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::nonlinear::{JacobianField, NonlinearSystem, VectorField};

/// Chain of masses, the first attached to a wall; spring `i` and damper `i`
/// connect mass `i` to its left neighbour (or the wall).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsdChainSpec {
    pub masses: usize,
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    /// Force enters the velocity equation of this node.
    pub input_node: usize,
    /// Position of this node is measured.
    pub output_node: usize,
    /// Relative parameter perturbation, uniform in `[-jitter, jitter]`.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for MsdChainSpec {
    fn default() -> Self {
        Self { masses: 4, mass: 1.0, stiffness: 1.0, damping: 1.0, input_node: 0, output_node: 3, jitter: 0.0, seed: 0 }
    }
}

pub(crate) struct ChainParameters {
    pub m: Vec<f64>,
    pub k: Vec<f64>,
    pub d: Vec<f64>,
}

impl MsdChainSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.masses == 0 {
            return bad("mass count must be at least 1".into());
        }
        for (name, v) in [("mass", self.mass), ("stiffness", self.stiffness), ("damping", self.damping)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.input_node >= self.masses || self.output_node >= self.masses {
            return bad(format!("nodes {}/{} outside 0..{}", self.input_node, self.output_node, self.masses));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return bad(format!("jitter must lie in [0, 1), got {}", self.jitter));
        }
        Ok(())
    }

    pub(crate) fn parameters(&self) -> ChainParameters {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut draw = |base: f64| {
            if self.jitter == 0.0 {
                base
            } else {
                base * (1.0 + self.jitter * rng.random_range(-1.0..=1.0))
            }
        };
        let m = (0..self.masses).map(|_| draw(self.mass)).collect();
        let k = (0..self.masses).map(|_| draw(self.stiffness)).collect();
        let d = (0..self.masses).map(|_| draw(self.damping)).collect();
        ChainParameters { m, k, d }
    }
}

/// Tridiagonal `K` (or `D`) of the wall-attached chain with element values `c`.
fn chain_matrix(c: &[f64]) -> Vec<(usize, usize, f64)> {
    let m = c.len();
    let mut t = Vec::new();
    for i in 0..m {
        let right = if i + 1 < m { c[i + 1] } else { 0.0 };
        t.push((i, i, c[i] + right));
        if i + 1 < m {
            t.push((i, i + 1, -c[i + 1]));
            t.push((i + 1, i, -c[i + 1]));
        }
    }
    t
}

fn first_order(spec: &MsdChainSpec, p: &ChainParameters) -> (SparseMatrix, SparseMatrix) {
    let m = spec.masses;
    let n = 2 * m;
    let mut e = Vec::with_capacity(n);
    let mut a = Vec::new();
    for i in 0..m {
        e.push((i, i, 1.0));
        e.push((m + i, m + i, p.m[i]));
        a.push((i, m + i, 1.0));
    }
    for (i, j, v) in chain_matrix(&p.k) {
        a.push((m + i, j, -v));
    }
    for (i, j, v) in chain_matrix(&p.d) {
        a.push((m + i, m + j, -v));
    }
    (
        SparseMatrix::from_triplets(n, n, &e).expect("indices in range"),
        SparseMatrix::from_triplets(n, n, &a).expect("indices in range"),
    )
}

fn io_matrices(spec: &MsdChainSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = 2 * spec.masses;
    let mut b = DMatrix::zeros(n, 1);
    b[spec.masses + spec.input_node] = 1.0;
    let mut c = DMatrix::zeros(1, n);
    c[spec.output_node] = 1.0;
    (b, c)
}

/// `E = diag(I, M)`, `A = [0 I; -K -D]` with `2 m` states.
pub fn gen_msd_chain(spec: &MsdChainSpec) -> Result<LinearSystem> {
    spec.validate()?;
    let p = spec.parameters();
    let (e, a) = first_order(spec, &p);
    let (b, c) = io_matrices(spec);
    LinearSystem::new(e, a, b, c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicMsdSpec {
    pub chain: MsdChainSpec,
    /// Every spring force is `k e + gamma e^3` for elongation `e`.
    pub gamma: f64,
}

/// Chain with hardening springs; the equilibrium is the origin and the
/// Jacobian there is the linear chain's `A`.
pub fn gen_cubic_msd(spec: &CubicMsdSpec) -> Result<NonlinearSystem> {
    spec.chain.validate()?;
    if !spec.gamma.is_finite() {
        return Err(Error::InvalidSpec(format!("gamma must be finite, got {}", spec.gamma)));
    }
    let p = spec.chain.parameters();
    let (e, a) = first_order(&spec.chain, &p);
    let (b, c) = io_matrices(&spec.chain);
    let m = spec.chain.masses;
    let gamma = spec.gamma;

    let elongations = move |x: &DVector<f64>| -> Vec<f64> { (0..m).map(|i| x[i] - if i > 0 { x[i - 1] } else { 0.0 }).collect() };
    let a_f = a.clone();
    let f: VectorField = Arc::new(move |x: &DVector<f64>| {
        let mut out = a_f.mul_vec(x);
        if gamma != 0.0 {
            let el = elongations(x);
            for i in 0..m {
                let own = gamma * el[i].powi(3);
                let next = if i + 1 < m { gamma * el[i + 1].powi(3) } else { 0.0 };
                out[m + i] += next - own;
            }
        }
        out
    });
    let jac: JacobianField = Arc::new(move |x: &DVector<f64>| {
        if gamma == 0.0 {
            return a.clone();
        }
        let el = elongations(x);
        let s: Vec<f64> = el.iter().map(|v| 3.0 * gamma * v * v).collect();
        let mut t = Vec::new();
        for (i, j, v) in chain_matrix(&s) {
            t.push((m + i, j, -v));
        }
        let cubic = SparseMatrix::from_triplets(2 * m, 2 * m, &t).expect("indices in range");
        SparseMatrix::combine(1.0, &a, 1.0, &cubic)
    });
    NonlinearSystem::new(e, f, jac, DVector::zeros(2 * m))?.with_input(b)?.with_output(c)
}
