//! Dense routines for the small real symmetric matrices that back
//! Hermitian mass matrices and Gaussian covariance factorizations.
//!
//! Everything here is written for matrices of dimension a few dozen at
//! most, so we use cyclic Jacobi sweeps and unblocked Cholesky. Both are
//! deterministic, which matters for reproducible reports.

/// A dense real symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_rows(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim, "row data must be dim*dim");
        SymMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.dim + c] = v;
    }

    /// Largest absolute entry; used as the scale for tolerances.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Eigenvalues (ascending) and eigenvectors (columns) via cyclic
    /// Jacobi rotations. The input is assumed symmetric; only the value
    /// `(a[r][c] + a[c][r]) / 2` is meaningful for off-diagonal pairs.
    pub fn jacobi_eigen(&self) -> (Vec<f64>, SymMatrix) {
        let n = self.dim;
        let mut a = self.clone();
        // off-diagonal pairs may carry rounding noise; use their mean
        for r in 0..n {
            for c in (r + 1)..n {
                let v = 0.5 * (a.get(r, c) + a.get(c, r));
                a.set(r, c, v);
                a.set(c, r, v);
            }
        }
        let mut v = SymMatrix::zeros(n);
        for i in 0..n {
            v.set(i, i, 1.0);
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let tol = 1e-15 * scale;
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for r in 0..n {
                for c in (r + 1)..n {
                    off = off.max(a.get(r, c).abs());
                }
            }
            if off <= tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() <= tol * 1e-2 {
                        continue;
                    }
                    let app = a.get(p, p);
                    let aqq = a.get(q, q);
                    let theta = 0.5 * (aqq - app) / apq;
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (1.0 + theta * theta).sqrt())
                    } else {
                        -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
        let vals: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
        let mut vecs = SymMatrix::zeros(n);
        for (col, &src) in order.iter().enumerate() {
            for row in 0..n {
                vecs.set(row, col, v.get(row, src));
            }
        }
        (vals, vecs)
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        self.jacobi_eigen().0[0]
    }
}

/// A factor `B` with `B Bᵀ = A` for a positive semidefinite `A`, produced
/// by unblocked Cholesky when the pivots stay nonnegative and otherwise by
/// an eigendecomposition with small negative eigenvalues clipped to zero.
///
/// Eigenvalues below `-clip_tol * scale` are rejected as genuinely
/// indefinite.
pub fn psd_factor(a: &SymMatrix, clip_tol: f64) -> Result<SymMatrix, f64> {
    let n = a.dim();
    let scale = a.max_abs().max(1e-300);
    if let Some(l) = cholesky_semidefinite(a, 1e-14 * scale) {
        return Ok(l);
    }
    let (vals, vecs) = a.jacobi_eigen();
    let min = vals[0];
    if min < -clip_tol * scale.max(1.0) {
        return Err(min);
    }
    let mut b = SymMatrix::zeros(n);
    for c in 0..n {
        let s = vals[c].max(0.0).sqrt();
        for r in 0..n {
            b.set(r, c, vecs.get(r, c) * s);
        }
    }
    Ok(b)
}

/// Cholesky that tolerates exactly singular directions: pivots within
/// `zero_tol` of zero produce a zero column. Returns `None` when a pivot
/// is decisively negative, signalling the caller to fall back.
fn cholesky_semidefinite(a: &SymMatrix, zero_tol: f64) -> Option<SymMatrix> {
    let n = a.dim();
    let mut l = SymMatrix::zeros(n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d < -zero_tol {
            return None;
        }
        if d <= zero_tol {
            // singular direction: zero column, but verify consistency below
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                if s.abs() > (zero_tol.max(1e-12)) * 10.0 {
                    return None;
                }
            }
            continue;
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Some(l)
}

/// `B v` for a dense square matrix.
pub fn mat_vec(b: &SymMatrix, v: &[f64]) -> Vec<f64> {
    let n = b.dim();
    let mut out = vec![0.0; n];
    for r in 0..n {
        let mut acc = 0.0;
        for c in 0..n {
            acc += b.get(r, c) * v[c];
        }
        out[r] = acc;
    }
    out
}
