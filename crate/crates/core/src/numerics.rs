//! Dense matrices, seeded random streams and uniform quantizers.
//!
//! Random streams use ChaCha8 (`rand_chacha`) keyed by a 64-bit run seed,
//! with one ChaCha stream id per purpose. Normal variates come from
//! `rand_distr::StandardNormal` (ziggurat). Both algorithms are fully
//! specified and platform independent, so identical seeds reproduce
//! bit-identical runs on any machine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
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
            return Err(Error::dims(
                "RealMatrix::from_vec",
                rows * cols,
                data.len(),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "matrix entries must be finite, found {bad}"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Single-column matrix.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn checked_index(&self, row: usize, col: usize) -> Result<usize> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::IndexOutOfRange {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(row * self.cols + col)
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                "RealMatrix::zip_with",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self
            .zip_with(other, |a, b| (a - b).abs())?
            .data
            .into_iter()
            .fold(0.0, f64::max))
    }

    /// `self · v`, accumulated left to right from `0.0`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::dims("matvec", self.cols, v.len()));
        }
        Ok((0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .fold(0.0, |acc, (&w, &x)| acc + w * x)
            })
            .collect())
    }
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix> {
    if a.cols != b.rows {
        return Err(Error::dims(
            "matmul",
            format!("b.rows = {}", a.cols),
            format!("b.rows = {}", b.rows),
        ));
    }
    let mut out = RealMatrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        let a_row = a.row(r);
        for c in 0..b.cols {
            let mut acc = 0.0;
            for (k, &av) in a_row.iter().enumerate() {
                acc += av * b.get(k, c);
            }
            out.set(r, c, acc);
        }
    }
    Ok(out)
}

/// Evenly spaced quantizer with `2^bits` levels over `[lo, hi]`, endpoints
/// included. Out-of-range inputs clamp to the endpoints; ties round up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformQuantizer {
    bits: u32,
    lo: f64,
    hi: f64,
}

impl UniformQuantizer {
    pub fn new(bits: u32, lo: f64, hi: f64) -> Result<Self> {
        if !(1..=52).contains(&bits) {
            return Err(Error::InvalidArgument(format!(
                "quantizer bits must be in 1..=52, got {bits}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "quantizer range must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { bits, lo, hi })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.levels() - 1) as f64
    }

    pub fn quantize(&self, v: f64) -> f64 {
        let top = (self.levels() - 1) as f64;
        if v <= self.lo {
            return self.lo;
        }
        if v >= self.hi {
            return self.hi;
        }
        let k = ((v - self.lo) / self.step() + 0.5).floor().clamp(0.0, top);
        if k == top {
            self.hi
        } else {
            self.lo + k * self.step()
        }
    }

    pub fn quantize_slice(&self, values: &mut [f64]) {
        for v in values {
            *v = self.quantize(*v);
        }
    }
}

/// Convenience wrapper for the spec-level free function.
pub fn quantize(v: f64, q: &UniformQuantizer) -> f64 {
    q.quantize(v)
}

/// Purpose label of a random stream. Each purpose maps to its own ChaCha
/// stream id so draws for one purpose never shift another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Init = 1,
    Programming = 2,
    ReadNoise = 3,
    Shuffle = 4,
    EvalNoise = 5,
    Refresh = 6,
    Calibration = 7,
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn for_purpose(seed: u64, purpose: StreamPurpose) -> Self {
        Self::new(seed, (purpose as u64) << 48)
    }

    /// Derived stream for one indexed unit of work (an epoch, a test example).
    pub fn substream(seed: u64, purpose: StreamPurpose, index: u64) -> Self {
        debug_assert!(index < 1 << 48);
        Self::new(seed, ((purpose as u64) << 48) | (index & ((1 << 48) - 1)))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn gaussian(&mut self, mean: f64, std: f64) -> Result<f64> {
        if !(std >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gaussian std must be >= 0, got {std}"
            )));
        }
        Ok(self.normal_unchecked(mean, std))
    }

    /// Like [`gaussian`](Self::gaussian) for callers that already validated
    /// `std`. A zero `std` returns `mean` exactly without consuming a draw.
    #[inline]
    pub fn normal_unchecked(&mut self, mean: f64, std: f64) -> f64 {
        if std == 0.0 {
            mean
        } else {
            mean + std * self.standard_normal()
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// One draw from `N(mean, std²)` on `stream`.
pub fn gaussian(stream: &mut RandomStream, mean: f64, std: f64) -> Result<f64> {
    stream.gaussian(mean, std)
}
