//! Dense real matrices and the symmetric positive-definite kernel used by
//! every covariance computation: Cholesky factorization with a relative
//! jitter ladder, triangular solves and log-determinants.
//!
//! Storage is row-major `f64`. Matrices here are small (at most a few
//! hundred rows: the labeled training set), so plain triple loops are
//! fast enough and keep the arithmetic auditable.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;


/// Errors from matrix construction and factorization.
#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// Operation requires a square matrix.
    NotSquare { rows: usize, cols: usize },
    /// Input is not symmetric within the relative tolerance.
    NotSymmetric { max_asymmetry: f64 },
    /// A NaN or infinity was encountered.
    NonFinite,
    /// Factorization failed even at the largest ladder jitter.
    NotPositiveDefinite { max_jitter: f64 },
    /// Operand shapes do not agree.
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotSquare { rows, cols } => {
                write!(f, "matrix is {rows}x{cols}, expected square")
            }
            Self::NotSymmetric { max_asymmetry } => {
                write!(f, "matrix is not symmetric (max asymmetry {max_asymmetry:e})")
            }
            Self::NonFinite => write!(f, "matrix contains NaN or infinite entries"),
            Self::NotPositiveDefinite { max_jitter } => write!(
                f,
                "matrix is not positive definite even with jitter {max_jitter:e}"
            ),
            Self::DimensionMismatch { expected, got } => write!(
                f,
                "dimension mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
        }
    }
}

impl core::error::Error for LinalgError {}

/// Dense row-major matrix of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, validating the shape and that
    /// every entry is finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: (rows, cols),
                got: (data.len(), 1),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested row slices; panics on ragged input. Test and
    /// example convenience.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Single-column matrix over a slice.
    pub fn column(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn col_to_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Copies the column block `[from, to)` into a new matrix.
    pub fn col_block(&self, from: usize, to: usize) -> Self {
        assert!(from <= to && to <= self.cols);
        Self::from_fn(self.rows, to - from, |i, j| self.get(i, from + j))
    }

    /// Horizontal concatenation: `[self | other]`.
    pub fn hstack(&self, other: &Matrix) -> Self {
        assert_eq!(self.rows, other.rows, "hstack row mismatch");
        Self::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self.get(i, j)
            } else {
                other.get(i, j - self.cols)
            }
        })
    }

    /// Vertical concatenation: `self` on top of `other`.
    pub fn vstack(&self, other: &Matrix) -> Self {
        assert_eq!(self.cols, other.cols, "vstack column mismatch");
        let mut data = Vec::with_capacity((self.rows + other.rows) * self.cols);
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Self { rows: self.rows + other.rows, cols: self.cols, data }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self * other`; panics on inner-dimension mismatch (internal
    /// programming-error contract, callers validate at API boundaries).
    pub fn matmul(&self, other: &Matrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul inner dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(orow) {
                    *o += aik * b;
                }
            }
        }
        out
    }

    /// `self * v` for a vector.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Mean of the diagonal; the scale reference for the jitter ladder.
    pub fn diag_mean(&self) -> f64 {
        if self.rows == 0 {
            return 0.0;
        }
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i))
            .sum::<f64>()
            / self.rows as f64
    }

    /// Squared Euclidean distance between row `i` of self and row `j` of
    /// `other`.
    pub fn row_sqdist(&self, i: usize, other: &Matrix, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(other.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ladder of jitters tried when a covariance fails to factor, expressed
/// relative to the mean diagonal of the input. The first rung is always
/// zero so well-conditioned matrices factor untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterPolicy {
    /// Multipliers of the mean input diagonal, tried in order.
    pub relative_ladder: Vec<f64>,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            relative_ladder: vec![0.0, 1e-8, 1e-6, 1e-4, 1e-2],
        }
    }
}

/// Lower-triangular Cholesky factor together with the jitter that was
/// added to the input diagonal to obtain it.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    lower: Matrix,
    jitter_used: f64,
}

impl CholFactor {
    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }
}

const SYMMETRY_RTOL: f64 = 1e-9;

/// Factors a symmetric positive-definite matrix as `L·Lᵀ = a + jitter·I`,
/// walking the policy ladder until a rung succeeds. `jitter_used` is the
/// smallest ladder value that worked.
pub fn cholesky(a: &Matrix, jitter_policy: &JitterPolicy) -> Result<CholFactor, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = a.rows();
    let scale = a.max_abs();
    let mut max_asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    if scale > 0.0 && max_asym > SYMMETRY_RTOL * scale {
        return Err(LinalgError::NotSymmetric { max_asymmetry: max_asym });
    }

    let tau = a.diag_mean();
    let mut max_jitter = 0.0;
    for &mult in &jitter_policy.relative_ladder {
        let jitter = mult * tau;
        max_jitter = jitter;
        if let Some(lower) = try_factor(a, jitter) {
            return Ok(CholFactor { lower, jitter_used: jitter });
        }
    }
    Err(LinalgError::NotPositiveDefinite { max_jitter })
}

/// One factorization attempt at a fixed jitter. Fails (returns `None`) as
/// soon as a pivot is non-positive or non-finite.
fn try_factor(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j) + jitter;
        for k in 0..j {
            let v = l.get(j, k);
            d -= v * v;
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let diag = d.sqrt();
        l.set(j, j, diag);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / diag);
        }
    }
    Some(l)
}

/// Solves `(L·Lᵀ)·x = b` by forward then back substitution. `b` may carry
/// multiple right-hand sides as columns.
pub fn solve_chol(factor: &CholFactor, b: &Matrix) -> Result<Matrix, LinalgError> {
    let n = factor.dim();
    if b.rows() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: (n, b.cols()),
            got: (b.rows(), b.cols()),
        });
    }
    let z = forward_substitute(factor.lower(), b);
    Ok(back_substitute_transposed(factor.lower(), &z))
}

/// Solves `L·z = b` for lower-triangular `L`.
pub fn forward_substitute(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    let k = b.cols();
    let mut z = b.clone();
    for c in 0..k {
        for i in 0..n {
            let mut s = z.get(i, c);
            for j in 0..i {
                s -= l.get(i, j) * z.get(j, c);
            }
            z.set(i, c, s / l.get(i, i));
        }
    }
    z
}

/// Solves `Lᵀ·x = z` for lower-triangular `L`.
fn back_substitute_transposed(l: &Matrix, z: &Matrix) -> Matrix {
    let n = l.rows();
    let k = z.cols();
    let mut x = z.clone();
    for c in 0..k {
        for i in (0..n).rev() {
            let mut s = x.get(i, c);
            for j in (i + 1)..n {
                s -= l.get(j, i) * x.get(j, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    x
}

/// Log-determinant of the factored matrix: `2·Σ ln L[i,i]`.
pub fn logdet(factor: &CholFactor) -> f64 {
    let l = factor.lower();
    2.0 * (0..l.rows()).map(|i| l.get(i, i).ln()).sum::<f64>()
}
