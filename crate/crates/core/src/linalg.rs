//! Dense row-major matrices and the kernels on the simulation hot path.
//!
//! Reservoir matrices are fully dense, so storage is a flat row-major
//! `Vec<f64>`. The matrix-vector kernels below fix the summation order, which
//! keeps every trajectory bit-reproducible across runs on the same target.
//! Factorizations (eigenvalues, Cholesky, symmetric eigendecomposition) are
//! delegated to `faer` through the conversion helpers at the bottom.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for Matrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "Matrix::from_vec",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
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

    /// Builds a matrix whose rows are the given equal-length slices.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension {
                    context: "Matrix::from_rows",
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self * factor + shift * I` for square matrices.
    pub fn scaled_plus_identity(&self, factor: f64, shift: f64) -> Matrix {
        debug_assert!(self.is_square());
        let mut out = self.scaled(factor);
        for i in 0..self.rows {
            out.data[i * self.cols + i] += shift;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `y = self * x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec: x length");
        assert_eq!(y.len(), self.rows, "matvec: y length");
        matvec_dispatch(self, x, y);
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = selfᵀ * x`.
    pub fn tr_matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.rows, "tr_matvec: x length");
        assert_eq!(y.len(), self.cols, "tr_matvec: y length");
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            for (yj, &mij) in y.iter_mut().zip(self.row(i)) {
                *yj += mij * xi;
            }
        }
    }

    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.cols];
        self.tr_matvec_into(x, &mut y);
        y
    }

    /// Multiplies several vectors at once, reading each row a single time.
    ///
    /// `ys[j] = self * xs[j]`. This is the kernel behind tangent propagation,
    /// where the state and its tangent vectors share one pass over the matrix.
    pub fn matvec_many(&self, xs: &[&[f64]], ys: &mut [Vec<f64>]) {
        assert_eq!(xs.len(), ys.len());
        for (x, y) in xs.iter().zip(ys.iter()) {
            assert_eq!(x.len(), self.cols);
            assert_eq!(y.len(), self.rows);
        }
        match xs.len() {
            0 => {}
            1 => self.matvec_into(xs[0], &mut ys[0]),
            2 => {
                let (y0, y1) = ys.split_at_mut(1);
                matvec2_dispatch(self, xs[0], xs[1], &mut y0[0], &mut y1[0]);
            }
            _ => {
                for i in 0..self.rows {
                    let r = self.row(i);
                    for (x, y) in xs.iter().zip(ys.iter_mut()) {
                        y[i] = dot(r, x);
                    }
                }
            }
        }
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul: inner dimension");
        let out = self.to_faer() * other.to_faer();
        Matrix::from_faer(out.as_ref())
    }

    /// `selfᵀ * self`, the Gram matrix of the columns.
    pub fn gram(&self) -> Matrix {
        let a = self.to_faer();
        let g = a.transpose() * &a;
        Matrix::from_faer(g.as_ref())
    }

    /// `selfᵀ * other`.
    pub fn tr_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "tr_matmul: row counts");
        let g = self.to_faer().transpose() * other.to_faer();
        Matrix::from_faer(g.as_ref())
    }

    pub fn to_faer(&self) -> faer::Mat<f64> {
        faer::Mat::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j])
    }

    pub fn from_faer(m: faer::MatRef<'_, f64>) -> Matrix {
        Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

/// Dot product with a fixed eight-lane accumulation order.
///
/// The lane order is the same on every code path, so the AVX2 build of the
/// kernels (selected at run time) gives bit-identical results.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2.
        return unsafe { avx2::dot(a, b) };
    }
    dot_body(a, b)
}

#[cfg(target_arch = "x86_64")]
#[inline]
fn has_avx2() -> bool {
    std::arch::is_x86_feature_detected!("avx2")
}

#[inline(always)]
fn dot_body(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    reduce8(&acc) + tail
}

#[inline(always)]
fn reduce8(acc: &[f64; 8]) -> f64 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Two dot products against one shared row.
#[inline(always)]
fn dot2_body(r: &[f64], x: &[f64], y: &[f64]) -> (f64, f64) {
    let mut ax = [0.0f64; 8];
    let mut ay = [0.0f64; 8];
    let cr = r.chunks_exact(8);
    let cx = x.chunks_exact(8);
    let cy = y.chunks_exact(8);
    let (rr, rx, ry) = (cr.remainder(), cx.remainder(), cy.remainder());
    for ((w, u), v) in cr.zip(cx).zip(cy) {
        for l in 0..8 {
            ax[l] += w[l] * u[l];
            ay[l] += w[l] * v[l];
        }
    }
    let mut tx = 0.0;
    let mut ty = 0.0;
    for ((w, u), v) in rr.iter().zip(rx).zip(ry) {
        tx += w * u;
        ty += w * v;
    }
    (reduce8(&ax) + tx, reduce8(&ay) + ty)
}

#[inline(always)]
fn matvec_body(m: &Matrix, x: &[f64], y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = dot_body(m.row(i), x);
    }
}

#[inline(always)]
fn matvec2_body(m: &Matrix, x0: &[f64], x1: &[f64], y0: &mut [f64], y1: &mut [f64]) {
    for i in 0..m.rows {
        let (a, b) = dot2_body(m.row(i), x0, x1);
        y0[i] = a;
        y1[i] = b;
    }
}

#[cfg(target_arch = "x86_64")]
mod avx2 {
    //! Explicit 256-bit versions of the lane loops above. Multiplies and adds
    //! stay separate (no fused multiply-add) and lanes `0..4` / `4..8` map onto
    //! two registers, so every rounding matches the portable code.

    use std::arch::x86_64::*;

    use super::{reduce8, Matrix};

    #[inline(always)]
    unsafe fn spill(lo: __m256d, hi: __m256d) -> [f64; 8] {
        let mut out = [0.0; 8];
        _mm256_storeu_pd(out.as_mut_ptr(), lo);
        _mm256_storeu_pd(out.as_mut_ptr().add(4), hi);
        out
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn dot(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().min(b.len());
        let full = n / 8 * 8;
        let (pa, pb) = (a.as_ptr(), b.as_ptr());
        let mut lo = _mm256_setzero_pd();
        let mut hi = _mm256_setzero_pd();
        let mut k = 0;
        while k < full {
            lo = _mm256_add_pd(lo, _mm256_mul_pd(_mm256_loadu_pd(pa.add(k)), _mm256_loadu_pd(pb.add(k))));
            hi = _mm256_add_pd(hi, _mm256_mul_pd(_mm256_loadu_pd(pa.add(k + 4)), _mm256_loadu_pd(pb.add(k + 4))));
            k += 8;
        }
        let mut tail = 0.0;
        for j in full..n {
            tail += a[j] * b[j];
        }
        reduce8(&spill(lo, hi)) + tail
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn dot2(r: &[f64], x: &[f64], y: &[f64]) -> (f64, f64) {
        let n = r.len();
        let full = n / 8 * 8;
        let (pr, px, py) = (r.as_ptr(), x.as_ptr(), y.as_ptr());
        let (mut xl, mut xh) = (_mm256_setzero_pd(), _mm256_setzero_pd());
        let (mut yl, mut yh) = (_mm256_setzero_pd(), _mm256_setzero_pd());
        let mut k = 0;
        while k < full {
            let wl = _mm256_loadu_pd(pr.add(k));
            let wh = _mm256_loadu_pd(pr.add(k + 4));
            xl = _mm256_add_pd(xl, _mm256_mul_pd(wl, _mm256_loadu_pd(px.add(k))));
            xh = _mm256_add_pd(xh, _mm256_mul_pd(wh, _mm256_loadu_pd(px.add(k + 4))));
            yl = _mm256_add_pd(yl, _mm256_mul_pd(wl, _mm256_loadu_pd(py.add(k))));
            yh = _mm256_add_pd(yh, _mm256_mul_pd(wh, _mm256_loadu_pd(py.add(k + 4))));
            k += 8;
        }
        let (mut tx, mut ty) = (0.0, 0.0);
        for j in full..n {
            tx += r[j] * x[j];
            ty += r[j] * y[j];
        }
        (reduce8(&spill(xl, xh)) + tx, reduce8(&spill(yl, yh)) + ty)
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn matvec(m: &Matrix, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(m.row(i), x);
        }
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn matvec2(m: &Matrix, x0: &[f64], x1: &[f64], y0: &mut [f64], y1: &mut [f64]) {
        for i in 0..m.rows() {
            let (a, b) = dot2(m.row(i), x0, x1);
            y0[i] = a;
            y1[i] = b;
        }
    }
}

fn matvec_dispatch(m: &Matrix, x: &[f64], y: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2.
        return unsafe { avx2::matvec(m, x, y) };
    }
    matvec_body(m, x, y)
}

fn matvec2_dispatch(m: &Matrix, x0: &[f64], x1: &[f64], y0: &mut [f64], y1: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2.
        return unsafe { avx2::matvec2(m, x0, x1, y0, y1) };
    }
    matvec2_body(m, x0, x1, y0, y1)
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Eigenvalues of a square real matrix as `(re, im)` pairs.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<(f64, f64)>> {
    if !m.is_square() {
        return Err(Error::Input(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    match m.rows() {
        0 => Ok(Vec::new()),
        1 => Ok(vec![(m.get(0, 0), 0.0)]),
        _ => {
            let ev = m
                .to_faer()
                .eigenvalues()
                .map_err(|e| Error::Numeric(format!("eigenvalue iteration failed: {e:?}")))?;
            Ok(ev.into_iter().map(|c| (c.re, c.im)).collect())
        }
    }
}

/// Largest eigenvalue modulus.
///
/// Uses the full Hessenberg/QR eigenvalue solve, so dominant complex
/// conjugate pairs are handled like any other eigenvalue.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if m.rows() == 0 {
        return Err(Error::Input("spectral radius of an empty matrix".into()));
    }
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max))
}
