//! Symmetric eigendecomposition `J = QΛQᵀ` and the quantities built on it:
//! eigen-amplitudes, problem features and the normalized regularization map.
//!
//! The solver is Householder tridiagonalization followed by implicit QL
//! iterations (EISPACK `tred2`/`tql2`), `O(n³)` and accurate to a few ulps of
//! `‖J‖` for the dense instances used here.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problem::CouplingMatrix;

const MAX_QL_ITERATIONS: usize = 60;

/// Eigenvectors (columns of `q`) and eigenvalues sorted in decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    q: Array2<f64>,
    lambda: Array1<f64>,
}

/// `φ_j = (1/n) Σᵢ |Q[i][j]|`, ordered like the eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFeatures {
    pub phi: Array1<f64>,
}

impl SpectralDecomposition {
    /// Builds a decomposition from explicit parts, sorting and fixing signs.
    pub fn from_parts(q: Array2<f64>, lambda: Array1<f64>) -> Result<Self> {
        let n = lambda.len();
        if q.dim() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: q.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidArgument("empty decomposition".into()));
        }
        Ok(canonicalize(q, lambda))
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    /// Orthogonal matrix with eigenvectors as columns.
    pub fn q(&self) -> ArrayView2<'_, f64> {
        self.q.view()
    }

    /// Eigenvalues, largest first.
    pub fn lambda(&self) -> ArrayView1<'_, f64> {
        self.lambda.view()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda[0]
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda[self.n() - 1]
    }

    /// `e = Qᵀc`
    pub fn to_eigenbasis(&self, c: &[f64]) -> Result<Array1<f64>> {
        if c.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: c.len(),
            });
        }
        Ok(self.q.t().dot(&ArrayView1::from(c)))
    }

    /// Row-wise `e_b = Qᵀc_b` for a `(batch, n)` block of amplitude vectors.
    pub fn to_eigenbasis_rows(&self, c: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if c.ncols() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: c.ncols(),
            });
        }
        Ok(c.dot(&self.q))
    }

    pub fn problem_features(&self) -> ProblemFeatures {
        let n = self.n() as f64;
        let phi = self
            .q
            .columns()
            .into_iter()
            .map(|col| col.iter().map(|v| v.abs()).sum::<f64>() / n)
            .collect();
        ProblemFeatures { phi }
    }

    /// `p = p̄ (max Λ - min Λ) + min Λ`
    pub fn denormalize_regularization(&self, pbar: f64) -> f64 {
        let (hi, lo) = (self.lambda_max(), self.lambda_min());
        pbar * (hi - lo) + lo
    }

    /// `QΛQᵀ`
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.q * &self.lambda.view().insert_axis(ndarray::Axis(0));
        scaled.dot(&self.q.t())
    }

    /// Writes the decomposition in a small binary format tagged with the
    /// content hash of the matrix it came from.
    pub fn save_cache(&self, path: &Path, matrix_digest: &str) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(CACHE_MAGIC)?;
        f.write_all(&(self.n() as u64).to_le_bytes())?;
        f.write_all(matrix_digest.as_bytes())?;
        for v in self.lambda.iter().chain(self.q.iter()) {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    /// Loads a cache file; returns `Ok(None)` if it belongs to another matrix.
    pub fn load_cache(path: &Path, matrix_digest: &str) -> Result<Option<Self>> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = || Error::Checkpoint(format!("malformed spectral cache {}", path.display()));
        let rest = bytes.strip_prefix(CACHE_MAGIC).ok_or_else(bad)?;
        if rest.len() < 8 + 64 {
            return Err(bad());
        }
        let n = u64::from_le_bytes(rest[..8].try_into().unwrap()) as usize;
        if &rest[8..72] != matrix_digest.as_bytes() {
            return Ok(None);
        }
        let body = &rest[72..];
        if body.len() != 8 * (n + n * n) {
            return Err(bad());
        }
        let mut vals = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let lambda: Array1<f64> = vals.by_ref().take(n).collect();
        let q = Array2::from_shape_vec((n, n), vals.collect()).map_err(|_| bad())?;
        Ok(Some(Self { q, lambda }))
    }
}

const CACHE_MAGIC: &[u8] = b"SIMCIM-EIG1";

/// Hex SHA-256 of the matrix entries (little-endian `f64`, row-major).
pub fn matrix_digest(matrix: &CouplingMatrix) -> String {
    let mut h = Sha256::new();
    h.update((matrix.n() as u64).to_le_bytes());
    for v in matrix.view().iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Sorts eigenpairs by decreasing eigenvalue and makes the largest-magnitude
/// entry of every eigenvector positive.
fn canonicalize(q: Array2<f64>, lambda: Array1<f64>) -> SpectralDecomposition {
    let n = lambda.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lambda[b].total_cmp(&lambda[a]));
    let mut sorted_q = Array2::zeros((n, n));
    let mut sorted_l = Array1::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        sorted_l[dst] = lambda[src];
        let col = q.column(src);
        let mut pivot = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        sorted_q.column_mut(dst).assign(&(&col * sign));
    }
    SpectralDecomposition {
        q: sorted_q,
        lambda: sorted_l,
    }
}

pub fn eigendecompose(matrix: &CouplingMatrix) -> Result<SpectralDecomposition> {
    eigendecompose_symmetric(matrix.view())
}

/// Eigendecomposition of any symmetric matrix (only the lower triangle is read).
pub fn eigendecompose_symmetric(a: ArrayView2<'_, f64>) -> Result<SpectralDecomposition> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: a.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let mut v = a.to_owned();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    // QL rotations act on eigenvector pairs; keep them as contiguous rows.
    let mut vt = v.reversed_axes().as_standard_layout().into_owned();
    ql_implicit(&mut vt, &mut d, &mut e)?;
    let q = vt.reversed_axes();
    Ok(canonicalize(q, Array1::from(d)))
}

/// Householder reduction to tridiagonal form. On return `v` holds the
/// accumulated orthogonal transform, `d` the diagonal and `e[1..]` the
/// sub-diagonal.
fn tridiagonalize(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }
    for i in (1..n).rev() {
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = 0.0;
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
                v[[j, i]] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].fill(0.0);
            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in (j + 1)..i {
                    let vkj = v[[k, j]];
                    g += vkj * d[k];
                    e[k] += vkj * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let (f, g) = (d[j], e[j]);
                for k in j..i {
                    v[[k, j]] -= f * e[k] + g * d[k];
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    v[[k, j]] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = 0.0;
    }
    v[[n - 1, n - 1]] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal `(d, e)`; rotations are applied to the rows
/// of `vt` (the transposed eigenvector matrix).
fn ql_implicit(vt: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iterations = 0;
            loop {
                iterations += 1;
                if iterations > MAX_QL_ITERATIONS {
                    let off = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                    return Err(Error::NoConvergence {
                        off_diagonal_norm: off,
                        iterations,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    rotate_rows(vt, i, c, s);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// `(row_i, row_{i+1}) ← (c·row_i − s·row_{i+1}, s·row_i + c·row_{i+1})`
fn rotate_rows(vt: &mut Array2<f64>, i: usize, c: f64, s: f64) {
    let n = vt.ncols();
    let data = vt.as_slice_mut().expect("standard layout");
    let (head, tail) = data.split_at_mut((i + 1) * n);
    let lo = &mut head[i * n..];
    let hi = &mut tail[..n];
    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}
