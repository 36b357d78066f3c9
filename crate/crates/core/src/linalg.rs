//! Dense row-major matrices and the symmetric eigensolver.
//!
//! Everything here is deterministic: no randomized methods, no parallel
//! reductions. The eigensolver is Householder tridiagonalization followed by
//! the implicit QL iteration, with the orthogonal factor kept column-major so
//! that every Givens rotation touches two contiguous slices.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · selfᵀ`, symmetric by construction.
    pub fn gram(&self) -> Self {
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            let ri = self.row(i);
            for j in i..n {
                let v = dot(ri, self.row(j));
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimMismatch { expected: self.rows * self.cols, found: other.rows * other.cols });
        }
        Ok(Self { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum::<f64>())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest `|a_ij - a_ji|`; infinite for non-square input.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators keep the loop vectorizable while staying
    // deterministic.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Pairwise summation; the result does not depend on how the caller chunks
/// work, only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sum that depends only on the multiset of values: sorts, then sums
/// pairwise. Reorders `values` in place.
pub fn canonical_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    pairwise_sum(values)
}

/// Eigendecomposition of a symmetric matrix.
///
/// `vectors` stores one eigenvector per row, in the order of `values`
/// (ascending), so `m = Σ_k values[k] · v_k v_kᵀ`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    vectors: Matrix,
}

impl SymEigen {
    /// Eigenvector `k` as a slice.
    pub fn vector(&self, k: usize) -> &[f64] {
        self.vectors.row(k)
    }

    /// Eigenvectors as matrix columns (the conventional `V`).
    pub fn vectors_as_columns(&self) -> Matrix {
        self.vectors.transpose()
    }

    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let mut out = Matrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            let v = self.vectors.row(k);
            for i in 0..n {
                let s = w * v[i];
                let row = &mut out.data[i * n + i..(i + 1) * n];
                for (o, &vj) in row.iter_mut().zip(&v[i..]) {
                    *o += s * vj;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                out.data[i * n + j] = out.data[j * n + i];
            }
        }
        out
    }
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
///
/// Only the lower triangle of `m` is read; callers are responsible for
/// checking symmetry.
pub fn sym_eig_unchecked(m: &Matrix) -> Result<SymEigen> {
    let n = m.rows();
    if n == 0 {
        return Ok(SymEigen { values: Vec::new(), vectors: Matrix::zeros(0, 0) });
    }
    // `q` is column-major: q[c * n + r] holds element (r, c) of the
    // orthogonal factor.
    let mut q = vec![0.0f64; n * n];
    for r in 0..n {
        for c in 0..n {
            q[c * n + r] = m.data[r * n + c];
        }
    }
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    tridiagonalize(n, &mut q, &mut d, &mut e, true);
    ql_implicit(n, Some(&mut q), &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(d[src]);
        vectors.data[dst * n..(dst + 1) * n].copy_from_slice(&q[src * n..(src + 1) * n]);
    }
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues only, ascending; skips all eigenvector work.
pub fn sym_eigvals_unchecked(m: &Matrix) -> Result<Vec<f64>> {
    let n = m.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut q = vec![0.0f64; n * n];
    for r in 0..n {
        for c in 0..n {
            q[c * n + r] = m.data[r * n + c];
        }
    }
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    tridiagonalize(n, &mut q, &mut d, &mut e, false);
    ql_implicit(n, None, &mut d, &mut e)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Checked symmetric eigendecomposition.
pub fn sym_eig(m: &Matrix) -> Result<SymEigen> {
    if !m.is_square() {
        return Err(Error::DimMismatch { expected: m.rows(), found: m.cols() });
    }
    let asymmetry = m.asymmetry();
    if !m.is_finite() || asymmetry > crate::spd::SYMMETRY_TOL {
        return Err(Error::InvalidMatrix { asymmetry });
    }
    sym_eig_unchecked(m)
}

/// Householder reduction to tridiagonal form, accumulating the transform.
fn tridiagonalize(n: usize, q: &mut [f64], d: &mut [f64], e: &mut [f64], accumulate: bool) {
    // Element (r, c) of the working matrix lives at q[c * n + r].
    macro_rules! at {
        ($r:expr, $c:expr) => {
            q[($c) * n + ($r)]
        };
    }
    for j in 0..n {
        d[j] = at!(n - 1, j);
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = at!(i - 1, j);
                at!(i, j) = 0.0;
                at!(j, i) = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = libm::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                at!(j, i) = f;
                g = e[j] + at!(j, j) * f;
                let col = &q[j * n..j * n + i];
                for k in j + 1..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
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
                f = d[j];
                g = e[j];
                let col = &mut q[j * n..j * n + i];
                for k in j..i {
                    col[k] -= f * e[k] + g * d[k];
                }
                d[j] = at!(i - 1, j);
                at!(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    if !accumulate {
        // The reduction leaves the tridiagonal's diagonal in place.
        for j in 0..n {
            d[j] = at!(j, j);
        }
        e[0] = 0.0;
        return;
    }
    for i in 0..n - 1 {
        at!(n - 1, i) = at!(i, i);
        at!(i, i) = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = at!(k, i + 1) / h;
            }
            for j in 0..=i {
                let (left, right) = q.split_at_mut((i + 1) * n);
                let cj = &mut left[j * n..j * n + i + 1];
                let ci = &right[..i + 1];
                let g = dot(ci, cj);
                for k in 0..=i {
                    cj[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            at!(k, i + 1) = 0.0;
        }
    }
    for j in 0..n {
        d[j] = at!(n - 1, j);
        at!(n - 1, j) = 0.0;
    }
    at!(n - 1, n - 1) = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal (d, e), rotating the columns of `q`.
fn ql_implicit(n: usize, mut q: Option<&mut [f64]>, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    const MAX_SWEEPS: usize = 64;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_SWEEPS {
                    return Err(Error::NumericalFailure("symmetric QL iteration did not converge"));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = libm::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
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
                    r = libm::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    if let Some(q) = q.as_deref_mut() {
                        let (left, right) = q.split_at_mut((i + 1) * n);
                        let col_i = &mut left[i * n..];
                        let col_next = &mut right[..n];
                        for (a, b) in col_i.iter_mut().zip(col_next.iter_mut()) {
                            let hk = *b;
                            *b = s * *a + c * hk;
                            *a = c * *a - s * hk;
                        }
                    }
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

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_matrix(n: usize, seed: u64) -> Matrix {
        let mut s = seed;
        let a = Matrix::from_fn(n, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        });
        a.add(&a.transpose()).unwrap()
    }

    #[test]
    fn eig_of_identity() {
        let e = sym_eig_unchecked(&Matrix::identity(3)).unwrap();
        for v in &e.values {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn eig_of_diagonal_is_sorted() {
        let e = sym_eig_unchecked(&Matrix::from_diag(&[5.0, 2.0])).unwrap();
        assert_eq!(e.values, [2.0, 5.0]);
        assert!((e.vector(0)[1].abs() - 1.0).abs() < 1e-15);
        assert!((e.vector(1)[0].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_reconstructs_random_matrices() {
        for &n in &[1usize, 2, 3, 7, 40, 96] {
            let m = lcg_matrix(n, n as u64 + 11);
            let e = sym_eig_unchecked(&m).unwrap();
            let back = e.reconstruct_with(|x| x);
            let err = back.sub(&m).unwrap().frobenius_norm();
            assert!(err < 1e-9 * (1.0 + m.frobenius_norm()), "n={n} err={err}");
            let v = e.vectors_as_columns();
            let vtv = v.transpose().matmul(&v).unwrap();
            let orth = vtv.sub(&Matrix::identity(n)).unwrap().max_abs();
            assert!(orth < 1e-10, "n={n} orth={orth}");
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eigvals_match_full_decomposition() {
        let m = lcg_matrix(50, 3);
        let full = sym_eig_unchecked(&m).unwrap().values;
        let only = sym_eigvals_unchecked(&m).unwrap();
        for (a, b) in full.iter().zip(&only) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn checked_eig_rejects_asymmetric() {
        let m = Matrix::from_rows(&[&[1.0, 0.0], &[1e-6, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&m), Err(Error::InvalidMatrix { .. })));
    }

    #[test]
    fn canonical_sum_is_order_free() {
        let mut a = [1e16, 1.0, -1e16, 3.0, 0.5];
        let mut b = [3.0, -1e16, 0.5, 1.0, 1e16];
        assert_eq!(canonical_sum(&mut a).to_bits(), canonical_sum(&mut b).to_bits());
    }

    #[test]
    fn gram_matches_matmul() {
        let a = Matrix::from_fn(3, 5, |i, j| (i * 5 + j) as f64 * 0.3 - 1.0);
        let g = a.gram();
        let g2 = a.matmul(&a.transpose()).unwrap();
        assert!(g.sub(&g2).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_small_and_large() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500500.0);
    }
}
