//! Real Schur decomposition `M = Q T Q^T`.
//!
//! Householder reduction to Hessenberg form followed by the Francis
//! double-shift QR iteration with the classic EISPACK `hqr2` deflation and
//! exceptional shifts. `T` is quasi-upper-triangular: 1x1 blocks for real
//! eigenvalues, 2x2 blocks for complex-conjugate pairs.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::Tolerances;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct RealSchur {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub eigenvalues: Vec<Complex64>,
}

impl RealSchur {
    /// Largest real part over all eigenvalues (`-inf` for an empty matrix).
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Diagonal block boundaries of `T`: `(start, size)` with size 1 or 2.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        diagonal_blocks(&self.t)
    }
}

pub(crate) fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

/// Eigenvalues read off the diagonal blocks of a quasi-triangular `T`.
pub fn schur_eigenvalues(t: &DMatrix<f64>) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(t.nrows());
    for (i, size) in diagonal_blocks(t) {
        if size == 1 {
            out.push(Complex64::new(t[(i, i)], 0.0));
        } else {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let p = 0.5 * (a - d);
            let disc = p * p + b * c;
            let mid = 0.5 * (a + d);
            if disc >= 0.0 {
                let s = disc.sqrt();
                out.push(Complex64::new(mid + s, 0.0));
                out.push(Complex64::new(mid - s, 0.0));
            } else {
                let s = (-disc).sqrt();
                out.push(Complex64::new(mid, s));
                out.push(Complex64::new(mid, -s));
            }
        }
    }
    out
}

pub fn real_schur(m: &DMatrix<f64>, tol: &Tolerances) -> Result<RealSchur> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!("Schur needs a square matrix, got {}x{}", n, m.ncols())));
    }
    if n > tol.dense_cap {
        return Err(Error::DenseCapExceeded { n, cap: tol.dense_cap });
    }
    let mut h = m.clone();
    let mut v = DMatrix::identity(n, n);
    if n == 0 {
        return Ok(RealSchur { q: v, t: h, eigenvalues: Vec::new() });
    }
    hessenberg(&mut h, &mut v);
    let (re, im) = francis_qr(&mut h, &mut v, tol.qr_iterations_per_eig)?;

    // Clean the strictly lower part so the block structure is explicit.
    for j in 0..n {
        for i in (j + 2)..n {
            h[(i, j)] = 0.0;
        }
    }
    for i in 1..n {
        let pair = im[i - 1] > 0.0 && im[i] < 0.0;
        if !pair {
            h[(i, i - 1)] = 0.0;
        }
    }
    let eigenvalues = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
    Ok(RealSchur { q: v, t: h, eigenvalues })
}

/// Orthogonal reduction to upper Hessenberg form, accumulating the transform in `v`.
fn hessenberg(hm: &mut DMatrix<f64>, vm: &mut DMatrix<f64>) {
    let n = hm.nrows();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    let h = hm.as_mut_slice();
    let at = |i: usize, j: usize| i + j * n;

    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[at(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[at(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[at(i, j)];
            }
            f /= hh;
            for i in m..=high {
                h[at(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[at(i, j)];
            }
            f /= hh;
            for j in m..=high {
                h[at(i, j)] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[at(m, m - 1)] = scale * g;
    }

    let v = vm.as_mut_slice();
    for m in (1..high).rev() {
        if h[at(m, m - 1)] == 0.0 {
            continue;
        }
        for i in (m + 1)..=high {
            ort[i] = h[at(i, m - 1)];
        }
        for j in m..=high {
            let mut g = 0.0;
            for i in m..=high {
                g += ort[i] * v[at(i, j)];
            }
            g = (g / ort[m]) / h[at(m, m - 1)];
            for i in m..=high {
                v[at(i, j)] += g * ort[i];
            }
        }
    }
    for j in 0..n {
        for i in (j + 2)..n {
            h[at(i, j)] = 0.0;
        }
    }
}

/// Francis double-shift iteration on a Hessenberg matrix; returns eigenvalue
/// real and imaginary parts.
#[allow(clippy::many_single_char_names)]
fn francis_qr(hm: &mut DMatrix<f64>, vm: &mut DMatrix<f64>, max_iter_per_eig: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let nn = hm.nrows();
    let h = hm.as_mut_slice();
    let v = vm.as_mut_slice();
    let at = |i: usize, j: usize| i + j * nn;

    let mut d = vec![0.0; nn];
    let mut e = vec![0.0; nn];
    let low = 0usize;
    let high = nn - 1;
    let eps = f64::EPSILON;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64);
    let (mut w, mut x, mut y);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[at(i, j)].abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut iter = 0usize;
    let mut best_sub = f64::INFINITY;
    while n >= low as isize {
        let nu = n as usize;
        // Find a negligible subdiagonal element.
        let mut l = nu;
        while l > low {
            s = h[at(l - 1, l - 1)].abs() + h[at(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[at(l, l - 1)].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            h[at(nu, nu)] += exshift;
            d[nu] = h[at(nu, nu)];
            e[nu] = 0.0;
            n -= 1;
            iter = 0;
            best_sub = f64::INFINITY;
        } else if l + 1 == nu {
            w = h[at(nu, nu - 1)] * h[at(nu - 1, nu)];
            p = (h[at(nu - 1, nu - 1)] - h[at(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[at(nu, nu)] += exshift;
            h[at(nu - 1, nu - 1)] += exshift;
            x = h[at(nu, nu)];

            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = d[nu - 1];
                if z != 0.0 {
                    d[nu] = x - w / z;
                }
                e[nu - 1] = 0.0;
                e[nu] = 0.0;
                x = h[at(nu, nu - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in (nu - 1)..nn {
                    z = h[at(nu - 1, j)];
                    h[at(nu - 1, j)] = q * z + p * h[at(nu, j)];
                    h[at(nu, j)] = q * h[at(nu, j)] - p * z;
                }
                for i in 0..=nu {
                    z = h[at(i, nu - 1)];
                    h[at(i, nu - 1)] = q * z + p * h[at(i, nu)];
                    h[at(i, nu)] = q * h[at(i, nu)] - p * z;
                }
                for i in low..=high {
                    z = v[at(i, nu - 1)];
                    v[at(i, nu - 1)] = q * z + p * v[at(i, nu)];
                    v[at(i, nu)] = q * v[at(i, nu)] - p * z;
                }
                h[at(nu, nu - 1)] = 0.0;
            } else {
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
            }
            n -= 2;
            iter = 0;
            best_sub = f64::INFINITY;
        } else {
            x = h[at(nu, nu)];
            y = 0.0;
            w = 0.0;
            if l < nu {
                y = h[at(nu - 1, nu - 1)];
                w = h[at(nu, nu - 1)] * h[at(nu - 1, nu)];
            }
            if iter == 10 {
                exshift += x;
                for i in low..=nu {
                    h[at(i, i)] -= x;
                }
                s = h[at(nu, nu - 1)].abs() + h[at(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=nu {
                        h[at(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            best_sub = best_sub.min(h[at(nu, nu - 1)].abs());
            if iter > max_iter_per_eig {
                return Err(Error::ConvergenceFailure {
                    what: "real Schur QR iteration",
                    iterations: iter,
                    best_residual: best_sub,
                });
            }

            // Two consecutive small subdiagonal elements.
            let mut m = nu - 2;
            loop {
                z = h[at(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[at(m + 1, m)] + h[at(m, m + 1)];
                q = h[at(m + 1, m + 1)] - z - r - s;
                r = h[at(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[at(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[at(m - 1, m - 1)].abs() + z.abs() + h[at(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                h[at(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[at(i, i - 3)] = 0.0;
                }
            }

            let mut k = m;
            while k < nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[at(k, k - 1)];
                    q = h[at(k + 1, k - 1)];
                    r = if notlast { h[at(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[at(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[at(k, k - 1)] = -h[at(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = h[at(k, j)] + q * h[at(k + 1, j)];
                        if notlast {
                            p += r * h[at(k + 2, j)];
                            h[at(k + 2, j)] -= p * z;
                        }
                        h[at(k, j)] -= p * x;
                        h[at(k + 1, j)] -= p * y;
                    }
                    for i in 0..=nu.min(k + 3) {
                        p = x * h[at(i, k)] + y * h[at(i, k + 1)];
                        if notlast {
                            p += z * h[at(i, k + 2)];
                            h[at(i, k + 2)] -= p * r;
                        }
                        h[at(i, k)] -= p;
                        h[at(i, k + 1)] -= p * q;
                    }
                    for i in low..=high {
                        p = x * v[at(i, k)] + y * v[at(i, k + 1)];
                        if notlast {
                            p += z * v[at(i, k + 2)];
                            v[at(i, k + 2)] -= p * r;
                        }
                        v[at(i, k)] -= p;
                        v[at(i, k + 1)] -= p * q;
                    }
                }
                k += 1;
            }
        }
    }
    Ok((d, e))
}
