use nalgebra::{DMatrix, DVector};

/// Householder QR of an `n x q` matrix (`q <= n`).
///
/// `Q = H_0 H_1 ... H_{q-1}` is kept as its reflector sequence, so applying
/// `Q` or `Q^T` to a vector costs `O(n q)` and `Q` is never formed.
#[derive(Clone, Debug)]
pub struct HouseholderQr {
    /// Column `k` holds reflector `v_k` in rows `k..n`, with `v_k[k] = 1`.
    reflectors: DMatrix<f64>,
    taus: Vec<f64>,
    r: DMatrix<f64>,
    rank_deficient: bool,
}

pub fn householder_qr(m: &DMatrix<f64>) -> HouseholderQr {
    HouseholderQr::new(m)
}

impl HouseholderQr {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let (n, q) = m.shape();
        assert!(q <= n, "householder_qr needs q <= n (got {n}x{q})");
        let mut a = m.clone();
        let mut reflectors = DMatrix::zeros(n, q);
        let mut taus = vec![0.0; q];

        for k in 0..q {
            let norm_x = a.view((k, k), (n - k, 1)).norm();
            let x0 = a[(k, k)];
            if norm_x == 0.0 {
                reflectors[(k, k)] = 1.0;
                continue;
            }
            let alpha = if x0 >= 0.0 { -norm_x } else { norm_x };
            // v = x - alpha e_1, scaled so that v[0] = 1.
            let v0 = x0 - alpha;
            reflectors[(k, k)] = 1.0;
            for i in (k + 1)..n {
                reflectors[(i, k)] = a[(i, k)] / v0;
            }
            let tau = (alpha - x0) / alpha;
            taus[k] = tau;

            a[(k, k)] = alpha;
            for i in (k + 1)..n {
                a[(i, k)] = 0.0;
            }
            for j in (k + 1)..q {
                let mut dot = a[(k, j)];
                for i in (k + 1)..n {
                    dot += reflectors[(i, k)] * a[(i, j)];
                }
                let s = tau * dot;
                a[(k, j)] -= s;
                for i in (k + 1)..n {
                    a[(i, j)] -= s * reflectors[(i, k)];
                }
            }
        }

        let r = a.view((0, 0), (q, q)).upper_triangle();
        let rmax = (0..q).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
        let threshold = (n.max(1) as f64) * f64::EPSILON * rmax;
        let rank_deficient = q > 0 && (rmax == 0.0 || (0..q).any(|k| r[(k, k)].abs() <= threshold));
        Self {
            reflectors,
            taus,
            r,
            rank_deficient,
        }
    }

    pub fn nrows(&self) -> usize {
        self.reflectors.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.reflectors.ncols()
    }

    /// The leading `q x q` upper-triangular block `R'`.
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// True when some diagonal entry of `R'` is negligible.
    pub fn is_rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    fn reflect(&self, k: usize, x: &mut DVector<f64>) {
        let tau = self.taus[k];
        if tau == 0.0 {
            return;
        }
        let n = self.nrows();
        let mut dot = x[k];
        for i in (k + 1)..n {
            dot += self.reflectors[(i, k)] * x[i];
        }
        let s = tau * dot;
        x[k] -= s;
        for i in (k + 1)..n {
            x[i] -= s * self.reflectors[(i, k)];
        }
    }

    /// `x <- Q x`
    pub fn apply_q(&self, x: &mut DVector<f64>) {
        for k in (0..self.ncols()).rev() {
            self.reflect(k, x);
        }
    }

    /// `x <- Q^T x`
    pub fn apply_qt(&self, x: &mut DVector<f64>) {
        for k in 0..self.ncols() {
            self.reflect(k, x);
        }
    }

    /// First `q` columns of `Q`.
    pub fn thin_q(&self) -> DMatrix<f64> {
        let (n, q) = (self.nrows(), self.ncols());
        let mut out = DMatrix::zeros(n, q);
        for j in 0..q {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            self.apply_q(&mut e);
            out.set_column(j, &e);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_vector() {
        let m = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let qr = householder_qr(&m);
        assert!((qr.r()[(0, 0)].abs() - 1.0).abs() < 1e-15);
        let mut e = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        qr.apply_q(&mut e);
        assert!((e[0].abs() - 1.0).abs() < 1e-15 && e[1] == 0.0 && e[2] == 0.0);
    }

    #[test]
    fn identity_gives_signed_diagonal() {
        let qr = householder_qr(&DMatrix::identity(2, 2));
        let r = qr.r();
        assert!((r[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((r[(1, 1)].abs() - 1.0).abs() < 1e-15);
        assert!(r[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn random_tall_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DMatrix::from_fn(100, 5, |_, _| rng.random_range(-1.0..1.0));
        let qr = householder_qr(&m);
        let q = qr.thin_q();
        assert!(orthonormality_defect(&q) <= 1e-12);
        assert!((&q * qr.r() - &m).norm() <= 1e-12 * m.norm());
        let mut x = DVector::from_fn(100, |i, _| (i as f64).sin());
        let orig = x.clone();
        qr.apply_qt(&mut x);
        qr.apply_q(&mut x);
        assert!((x - orig).norm() < 1e-13);
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        let m = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(householder_qr(&m).is_rank_deficient());
    }
}
