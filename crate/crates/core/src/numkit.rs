// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic numeric substrate.
//!
//! [`Mat`] holds row-major `f32` data for the inference engine, [`Vec64`]
//! holds `f64` vectors for the theory checks, and [`SeededRng`] is a PCG
//! XSL-RR 128/64 stream with Box–Muller Gaussians. Every reduction sums in a
//! fixed ascending order so results are bit-stable across runs and platforms.

use rand_core::Rng;
use rand_pcg::Pcg64;

use crate::error::{Error, Result};

/// Row-major dense `f32` matrix. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Input(format!("non-finite entry at index {i}")));
        }
        Ok(Self { rows, cols, data })
    }

    /// Build without the finiteness scan. Callers guarantee the invariant.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.rows {
            return Err(Error::Dimension(format!("row range {start}..{end} of {} rows", self.rows)));
        }
        Ok(Self::from_raw(end - start, self.cols, self.data[start * self.cols..end * self.cols].to_vec()))
    }

    pub fn transpose(&self) -> Self {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Self::from_raw(self.cols, self.rows, out)
    }
}

/// `a · b` with each output accumulated over `k` in ascending order.
pub fn matmul(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.cols != b.rows {
        return Err(Error::Dimension(format!("matmul {}x{} by {}x{}", a.rows, a.cols, b.rows, b.cols)));
    }
    let (n, m, p) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0f32; n * p];
    for i in 0..n {
        for j in 0..p {
            let mut acc = 0.0f32;
            for k in 0..m {
                acc += a.data[i * m + k] * b.data[k * p + j];
            }
            out[i * p + j] = acc;
        }
    }
    Ok(Mat::from_raw(n, p, out))
}

/// Column means over rows, accumulated in `f64` over ascending row index.
pub fn mean_rows(m: &Mat) -> Result<Vec<f32>> {
    if m.rows == 0 {
        return Err(Error::Empty("mean_rows of a matrix with zero rows"));
    }
    let mut acc = vec![0.0f64; m.cols];
    for r in 0..m.rows {
        for (a, &x) in acc.iter_mut().zip(m.row(r)) {
            *a += f64::from(x);
        }
    }
    let t = m.rows as f64;
    Ok(acc.into_iter().map(|a| (a / t) as f32).collect())
}

/// `rows × cols` matrix with entries `scale · N(0, 1)`, drawn in row-major order.
pub fn gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> Mat {
    assert!(scale > 0.0 && scale.is_finite(), "scale must be positive");
    let data = (0..rows * cols).map(|_| (scale * rng.next_gaussian()) as f32).collect();
    Mat::from_raw(rows, cols, data)
}

/// Finite `f64` vector for the theory checks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vec64(Vec<f64>);

impl Vec64 {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Input(format!("non-finite entry at index {i}")));
        }
        Ok(Self(data))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn from_f32(v: &[f32]) -> Self {
        Self(v.iter().map(|&x| f64::from(x)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|x| x * s).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self += s · other`
    pub fn axpy(&mut self, s: f64, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += s * b;
        }
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0).then(|| self.scale(1.0 / n))
    }
}

impl From<Vec<f64>> for Vec64 {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    (aa > 0.0 && bb > 0.0).then(|| ab / (aa.sqrt() * bb.sqrt()))
}

/// Stream id shared by every [`SeededRng`]; only the seed selects the state.
const PCG_STREAM: u128 = 0xa02b_dbf7_bb3c_0a7a_c28f_a16a_64ab_f96b;

/// Portable seeded generator: PCG XSL-RR 128/64 (LCG) with Box–Muller normals.
///
/// Uniforms take the top 53 bits of one 64-bit output. A Gaussian pair
/// consumes two outputs `(u1, u2)`; the cosine branch is returned first and
/// the sine branch is cached for the next call.
#[derive(Debug, Clone)]
pub struct SeededRng {
    pcg: Pcg64,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { pcg: Pcg64::new(u128::from(seed), PCG_STREAM), spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.pcg.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` by multiply-shift (n > 0).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}
