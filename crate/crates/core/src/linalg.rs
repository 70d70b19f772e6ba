//! Dense row-major matrices and a symmetric eigensolver.
//!
//! The eigensolver is the classic two-phase scheme: Householder reduction to
//! tridiagonal form followed by the implicit QL iteration with Wilkinson-style
//! shifts. Internally the orthogonal factor is stored transposed, so that the
//! hot loops of both phases walk contiguous rows of a row-major buffer.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::{Error, Result};

/// A dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data.
    ///
    /// Panics if `data.len() != nrows * ncols`.
    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), nrows * ncols, "data length does not match shape");
        Self { nrows, ncols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.as_ref().len(), ncols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self { nrows, ncols, data }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                data.push(f(i, j));
            }
        }
        Self { nrows, ncols, data }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    pub fn trace(&self) -> f64 {
        (0..self.nrows.min(self.ncols)).map(|i| self[(i, i)]).sum()
    }

    /// Element-wise `self + other`.
    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix::from_row_major(self.nrows, self.ncols, data)
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            let out_row = &mut out.data[i * other.ncols..(i + 1) * other.ncols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · self`, exactly symmetric.
    pub fn gram(&self) -> Matrix {
        let n = self.ncols;
        let mut out = Matrix::zeros(n, n);
        for r in 0..self.nrows {
            let row = self.row(r);
            for (i, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for j in i..n {
                    out_row[j] += a * row[j];
                }
            }
        }
        out.mirror_upper();
        out
    }

    /// `self · selfᵀ`, exactly symmetric.
    pub fn outer_gram(&self) -> Matrix {
        let n = self.nrows;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            let ri = self.row(i);
            for j in i..n {
                let s: f64 = ri.iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
                out.data[i * n + j] = s;
            }
        }
        out.mirror_upper();
        out
    }

    /// Copies the strict upper triangle onto the lower one.
    pub fn mirror_upper(&mut self) {
        let n = self.nrows;
        debug_assert!(self.is_square());
        for i in 0..n {
            for j in (i + 1)..n {
                self.data[j * n + i] = self.data[i * n + j];
            }
        }
    }

    /// Rows `rows` and columns `cols` of `self`, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let r = self.row(i);
            data.extend(cols.iter().map(|&j| r[j]));
        }
        Matrix::from_row_major(rows.len(), cols.len(), data)
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry (0 for a zero matrix).
    pub fn symmetry_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.nrows;
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                dev = dev.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        dev / scale
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &self.data[i * self.ncols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &mut self.data[i * self.ncols + j]
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Row `j` is the unit eigenvector for `values[j]`; `None` when only
    /// eigenvalues were requested.
    pub vectors: Option<Matrix>,
}

impl SymmetricEigen {
    /// Eigenvector `j` as a slice. Panics if vectors were not computed.
    pub fn vector(&self, j: usize) -> &[f64] {
        self.vectors.as_ref().expect("eigenvectors not computed").row(j)
    }
}

/// Full eigen-decomposition of the symmetric matrix `a`.
///
/// Only the upper triangle of `a` is read. With `want_vectors == false` the
/// transformation accumulation and the vector rotations are skipped.
pub fn symmetric_eigen(a: &Matrix, want_vectors: bool) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(alloc::format!(
            "eigen-decomposition of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Vec::new(),
            vectors: want_vectors.then(|| Matrix::zeros(0, 0)),
        });
    }

    // w[c * n + r] holds V[r][c]; tred2 reads the lower triangle of V, which is
    // the upper triangle of `a`.
    let mut w = a.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut w, n, &mut d, &mut e, want_vectors);
    tridiagonal_ql(&mut w, n, &mut d, &mut e, want_vectors)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = want_vectors.then(|| {
        let mut v = Matrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            v.row_mut(dst).copy_from_slice(&w[src * n..(src + 1) * n]);
        }
        v
    });
    Ok(SymmetricEigen { values, vectors })
}

/// Ascending eigenvalues of the symmetric matrix `a` (upper triangle read).
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    symmetric_eigen(a, false).map(|eig| eig.values)
}

/// Householder reduction to tridiagonal form (EISPACK `tred2`).
///
/// On return `d` holds the diagonal and `e[1..]` the sub-diagonal. When
/// `accumulate` is set, the rows of `w` hold the orthogonal transformation.
fn tridiagonalize(w: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64], accumulate: bool) {
    for j in 0..n {
        d[j] = w[j * n + n - 1];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = w[j * n + i - 1];
                w[j * n + i] = 0.0;
                w[i * n + j] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = libm::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].iter_mut().for_each(|x| *x = 0.0);

            for j in 0..i {
                f = d[j];
                w[i * n + j] = f;
                let row = &w[j * n..j * n + i];
                g = e[j] + row[j] * f;
                for k in (j + 1)..i {
                    g += row[k] * d[k];
                    e[k] += row[k] * f;
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
                let row = &mut w[j * n..j * n + i];
                for k in j..i {
                    row[k] -= f * e[k] + g * d[k];
                }
                d[j] = w[j * n + i - 1];
                w[j * n + i] = 0.0;
            }
        }
        d[i] = h;
    }

    if !accumulate {
        for j in 0..n {
            d[j] = w[j * n + j];
        }
        e[0] = 0.0;
        return;
    }

    for i in 0..n - 1 {
        w[i * n + n - 1] = w[i * n + i];
        w[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = w[(i + 1) * n + k] / h;
            }
            for j in 0..=i {
                let (head, tail) = w.split_at_mut((i + 1) * n);
                let pivot = &tail[..=i];
                let row = &mut head[j * n..j * n + i + 1];
                let g: f64 = pivot.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                for (x, dk) in row.iter_mut().zip(&d[..=i]) {
                    *x -= g * dk;
                }
            }
        }
        for k in 0..=i {
            w[(i + 1) * n + k] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = w[j * n + n - 1];
        w[j * n + n - 1] = 0.0;
    }
    w[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iteration on the tridiagonal matrix (EISPACK `tql2`).
fn tridiagonal_ql(
    w: &mut [f64],
    n: usize,
    d: &mut [f64],
    e: &mut [f64],
    rotate_vectors: bool,
) -> Result<()> {
    const MAX_SWEEPS: usize = 60;

    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
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
        // e[n-1] == 0, so m < n.
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_SWEEPS {
                    return Err(Error::NoConvergence);
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
                for di in &mut d[(l + 2)..n] {
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
                    if rotate_vectors {
                        let (lo, hi) = w.split_at_mut((i + 1) * n);
                        let vi = &mut lo[i * n..];
                        let vi1 = &mut hi[..n];
                        for (a, b) in vi.iter_mut().zip(vi1.iter_mut()) {
                            let t = *b;
                            *b = s * *a + c * t;
                            *a = c * *a - s * t;
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

/// Upper-triangular factor `R` of a tall matrix whose rows arrive one at a
/// time, with `RᵀR` equal to the Gram matrix of all rows pushed so far.
///
/// Each row is rotated into `R` by Givens rotations, so the Gram matrix is
/// never formed and small singular values keep their relative accuracy.
#[derive(Debug, Clone)]
pub struct StreamingQr {
    n: usize,
    r: Vec<f64>,
}

impl StreamingQr {
    pub fn new(n: usize) -> Self {
        Self { n, r: vec![0.0; n * n] }
    }

    /// Rotates the dense row `x` into `R`; `x` is used as scratch.
    pub fn push(&mut self, x: &mut [f64]) {
        let n = self.n;
        assert_eq!(x.len(), n, "row length");
        for j in 0..n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let row = &mut self.r[j * n..(j + 1) * n];
            let rjj = row[j];
            // A nonzero entry is only ever rotated into a row with a
            // nonzero diagonal, so a zero diagonal means an empty row.
            if rjj == 0.0 {
                row[j..].copy_from_slice(&x[j..]);
                return;
            }
            let h = libm::hypot(rjj, xj);
            let (c, s) = (rjj / h, xj / h);
            row[j] = h;
            x[j] = 0.0;
            for (rl, xl) in row[j + 1..].iter_mut().zip(&mut x[j + 1..]) {
                let (a, b) = (*rl, *xl);
                *rl = c * a + s * b;
                *xl = c * b - s * a;
            }
        }
    }

    pub fn into_r(self) -> Matrix {
        Matrix::from_row_major(self.n, self.n, self.r)
    }
}

/// Householder QR with column pivoting, `A Π = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// `Rᵀ`, lower triangular, so that columns of `R` are contiguous.
    pub rt: Matrix,
    /// Column `j` of `R` belongs to column `perm[j]` of `A`.
    pub perm: Vec<usize>,
}

impl PivotedQr {
    /// Number of leading diagonal entries of `R` above `rtol · |R_00|`.
    pub fn rank(&self, rtol: f64) -> usize {
        let k = self.rt.nrows().min(self.rt.ncols());
        let top = if k == 0 { 0.0 } else { self.rt[(0, 0)].abs() };
        (0..k)
            .take_while(|&j| {
                let d = self.rt[(j, j)].abs();
                d > 0.0 && d > rtol * top
            })
            .count()
    }
}

/// Column-pivoted Householder QR (Businger–Golub) of `a`.
pub fn pivoted_qr(a: &Matrix) -> PivotedQr {
    let (m, n) = (a.nrows(), a.ncols());
    // Rows of `at` are the columns of the working matrix.
    let mut at = a.transpose();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut v = vec![0.0; m];
    for k in 0..m.min(n) {
        let norm2 = |row: &[f64]| row[k..].iter().map(|x| x * x).sum::<f64>();
        let mut best = k;
        let mut best_norm = norm2(at.row(k));
        for j in k + 1..n {
            let nj = norm2(at.row(j));
            if nj > best_norm {
                best = j;
                best_norm = nj;
            }
        }
        if best != k {
            for c in 0..m {
                at.data.swap(k * m + c, best * m + c);
            }
            perm.swap(k, best);
        }
        if best_norm == 0.0 {
            break;
        }
        let col = at.row(k);
        let norm = libm::sqrt(best_norm);
        let alpha = if col[k] > 0.0 { -norm } else { norm };
        v[k..].copy_from_slice(&col[k..]);
        v[k] -= alpha;
        let beta: f64 = v[k..].iter().map(|x| x * x).sum();
        {
            let row = at.row_mut(k);
            row[k] = alpha;
            row[k + 1..].iter_mut().for_each(|x| *x = 0.0);
        }
        if beta == 0.0 {
            continue;
        }
        for j in k + 1..n {
            let row = at.row_mut(j);
            let s: f64 = v[k..].iter().zip(&row[k..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * s / beta;
            for (x, vi) in row[k..].iter_mut().zip(&v[k..]) {
                *x -= f * vi;
            }
        }
    }
    PivotedQr { rt: at, perm }
}
