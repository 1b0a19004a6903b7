//! Dense row-major linear algebra, the logistic function and a deterministic
//! random number generator.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{invalid, Error, Result};

/// Logistic function `1 / (1 + exp(-lambda * x))`.
///
/// `lambda` sets the steepness. Saturates to exactly 0 or 1 for large `|x|`.
#[inline]
pub fn sigmoid(x: f64, lambda: f64) -> f64 {
    debug_assert!(lambda > 0.0);
    1.0 / (1.0 + libm::exp(-lambda * x))
}

/// Derivative of [`sigmoid`] with respect to `x`, written in terms of the
/// sigmoid's output `s`.
#[inline]
pub fn sigmoid_prime_from_output(s: f64, lambda: f64) -> f64 {
    lambda * s * (1.0 - s)
}

/// A nonempty list of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("vector"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector".into()));
        }
        Ok(Vector(data))
    }

    pub fn from_slice(data: &[f64]) -> Result<Self> {
        Self::new(data.to_vec())
    }

    /// Panics if `len == 0`.
    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "vector length must be positive");
        Vector(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|x| x * x).sum())
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        check_len("vector add", self.len(), other.len())?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn scale(&self, k: f64) -> Vector {
        Vector(self.0.iter().map(|x| x * k).collect())
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("matrix dimensions must be positive"));
        }
        check_len("matrix data", rows * cols, data.len())?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
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

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_len("matrix row", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Entries drawn from `uniform[-range, range)`, filled in row-major order.
    pub fn random_uniform(rows: usize, cols: usize, range: f64, rng: &mut Rng) -> Self {
        let mut m = Self::zeros(rows, cols);
        for w in &mut m.data {
            *w = rng.uniform_unchecked(-range, range);
        }
        m
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|w| *w = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `M v`, length `rows`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vector> {
        check_len("matvec", self.cols, v.len())?;
        let mut out = vec![0.0; self.rows];
        matvec_into(self, v, &mut out);
        Ok(Vector(out))
    }

    /// `vᵀ M`, length `cols`.
    pub fn vecmat(&self, v: &[f64]) -> Result<Vector> {
        check_len("vecmat", self.rows, v.len())?;
        let mut out = vec![0.0; self.cols];
        vecmat_into(v, self, &mut out);
        Ok(Vector(out))
    }
}

/// `out = M v` without shape checks beyond debug assertions.
#[inline]
pub(crate) fn matvec_into(m: &Matrix, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.cols, v.len());
    debug_assert_eq!(m.rows, out.len());
    for (o, row) in out.iter_mut().zip(m.data.chunks_exact(m.cols)) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// `out = vᵀ M`. Walks `M` row by row so the inner loop is contiguous.
#[inline]
pub(crate) fn vecmat_into(v: &[f64], m: &Matrix, out: &mut [f64]) {
    debug_assert_eq!(m.rows, v.len());
    debug_assert_eq!(m.cols, out.len());
    out.iter_mut().for_each(|o| *o = 0.0);
    vecmat_acc(v, m, out);
}

/// `out += vᵀ M`.
#[inline]
pub(crate) fn vecmat_acc(v: &[f64], m: &Matrix, out: &mut [f64]) {
    for (&vi, row) in v.iter().zip(m.data.chunks_exact(m.cols)) {
        if vi == 0.0 {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(row) {
            *o += vi * w;
        }
    }
}

/// `m += a bᵀ` (rank-one update).
#[inline]
pub(crate) fn outer_acc(m: &mut Matrix, a: &[f64], b: &[f64]) {
    debug_assert_eq!(m.rows, a.len());
    debug_assert_eq!(m.cols, b.len());
    let cols = m.cols;
    for (&ai, row) in a.iter().zip(m.data.chunks_exact_mut(cols)) {
        if ai == 0.0 {
            continue;
        }
        for (w, &bj) in row.iter_mut().zip(b) {
            *w += ai * bj;
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

/// SplitMix64 generator.
///
/// Each step adds `0x9E3779B97F4A7C15` to the state (wrapping) and mixes the
/// result:
///
/// ```text
/// z = state
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// out = z ^ (z >> 31)
/// ```
///
/// Reals in `[0, 1)` take the top 53 bits: `(out >> 11) * 2^-53`. Normal
/// deviates use one Box–Muller draw per call: `u1 = 1 - next_f64()`,
/// `u2 = next_f64()`, `sqrt(-2 ln u1) * cos(2π u2)`; the sine branch is
/// discarded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::NonFinite("uniform bounds".into()));
        }
        if lo >= hi {
            return Err(invalid("uniform requires lo < hi"));
        }
        Ok(self.uniform_unchecked(lo, hi))
    }

    pub(crate) fn uniform_unchecked(&mut self, lo: f64, hi: f64) -> f64 {
        loop {
            let x = lo + (hi - lo) * self.next_f64();
            // rounding can land on `hi`; redraw
            if x < hi {
                return x;
            }
        }
    }

    /// Uniform integer in `0..n`, unbiased (rejection on the low tail).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return (x % n) as usize;
            }
        }
    }

    /// Standard normal deviate.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// Fisher–Yates, from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Free-function form of [`Rng::uniform`].
pub fn rand_uniform(rng: &mut Rng, lo: f64, hi: f64) -> Result<f64> {
    rng.uniform(lo, hi)
}
