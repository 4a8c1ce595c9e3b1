//! Datasets, the seeded split protocol and the standardization rules.
//!
//! One trial takes `n` labeled examples (split 90-10 into train and
//! validation), holds out 1000 test examples, and treats everything else
//! as unlabeled. Standardization constants come from the labeled training
//! block only, so neither unlabeled nor test rows can leak into the
//! inductive protocol.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;

/// Size of the held-out test block in every split.
pub const TEST_SIZE: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    InsufficientData { have: usize, need: usize },
    LengthMismatch { left: usize, right: usize },
    EmptyVectors,
    ZeroBaseline,
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InsufficientData { have, need } => {
                write!(f, "dataset has {have} rows, protocol needs at least {need}")
            }
            Self::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Self::EmptyVectors => write!(f, "empty input vectors"),
            Self::ZeroBaseline => write!(f, "baseline RMSE must be positive"),
        }
    }
}

impl core::error::Error for DataError {}

/// A full regression dataset: feature matrix and targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(name: String, x: Matrix, y: Vec<f64>) -> Result<Self, DataError> {
        if x.rows() != y.len() {
            return Err(DataError::LengthMismatch { left: x.rows(), right: y.len() });
        }
        Ok(Self { name, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }
}

/// One seeded trial: the index partition, the extracted blocks, and the
/// standardization constants computed from the labeled training block.
#[derive(Debug, Clone)]
pub struct SplitView {
    pub seed: u64,
    pub n_labeled: usize,

    pub labeled_train_idx: Vec<usize>,
    pub validation_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub unlabeled_idx: Vec<usize>,

    pub labeled_train_x: Matrix,
    pub labeled_train_y: Vec<f64>,
    pub validation_x: Matrix,
    pub validation_y: Vec<f64>,
    pub test_x: Matrix,
    pub test_y: Vec<f64>,
    pub unlabeled_x: Matrix,

    /// Per-feature mean/std of the labeled training block. A zero std
    /// marks a degenerate column; such features standardize to 0.
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

fn gather_rows(x: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), x.cols(), |i, j| x.get(idx[i], j))
}

fn gather(y: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| y[i]).collect()
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

impl SplitView {
    /// Assembles a view from explicit index sets, computing the
    /// standardization constants from the labeled training block.
    pub fn from_indices(
        dataset: &Dataset,
        seed: u64,
        n_labeled: usize,
        labeled_train_idx: Vec<usize>,
        validation_idx: Vec<usize>,
        test_idx: Vec<usize>,
        unlabeled_idx: Vec<usize>,
    ) -> Self {
        let labeled_train_x = gather_rows(&dataset.x, &labeled_train_idx);
        let labeled_train_y = gather(&dataset.y, &labeled_train_idx);
        let d = dataset.dim();
        let mut x_mean = vec![0.0; d];
        let mut x_std = vec![0.0; d];
        for c in 0..d {
            let (m, s) = mean_std((0..labeled_train_x.rows()).map(|i| labeled_train_x.get(i, c)));
            x_mean[c] = m;
            x_std[c] = s;
        }
        let (y_mean, y_std) = mean_std(labeled_train_y.iter().copied());
        Self {
            seed,
            n_labeled,
            labeled_train_x,
            labeled_train_y,
            validation_x: gather_rows(&dataset.x, &validation_idx),
            validation_y: gather(&dataset.y, &validation_idx),
            test_x: gather_rows(&dataset.x, &test_idx),
            test_y: gather(&dataset.y, &test_idx),
            unlabeled_x: gather_rows(&dataset.x, &unlabeled_idx),
            labeled_train_idx,
            validation_idx,
            test_idx,
            unlabeled_idx,
            x_mean,
            x_std,
            y_mean,
            y_std,
        }
    }

    /// Z-scores a feature matrix with the stored constants; degenerate
    /// columns map to 0.
    pub fn standardize_x(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            if self.x_std[j] > 0.0 {
                (x.get(i, j) - self.x_mean[j]) / self.x_std[j]
            } else {
                0.0
            }
        })
    }

    pub fn standardize_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .map(|&v| {
                if self.y_std > 0.0 {
                    (v - self.y_mean) / self.y_std
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Maps a standardized prediction back to original target units.
    pub fn unstandardize_y(&self, z: f64) -> f64 {
        self.y_mean + self.y_std * z
    }

    /// Variances scale by the square of the target std.
    pub fn unstandardize_var(&self, v: f64) -> f64 {
        self.y_std * self.y_std * v
    }

    /// Keeps at most `cap` unlabeled rows, subsampled deterministically.
    pub fn cap_unlabeled(&mut self, cap: usize, seed: u64) {
        if self.unlabeled_idx.len() <= cap {
            return;
        }
        let mut order: Vec<usize> = (0..self.unlabeled_idx.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        fisher_yates(&mut order, &mut rng);
        order.truncate(cap);
        order.sort_unstable();
        self.unlabeled_idx = order.iter().map(|&i| self.unlabeled_idx[i]).collect();
        self.unlabeled_x = Matrix::from_fn(cap, self.unlabeled_x.cols(), |i, j| {
            self.unlabeled_x.get(order[i], j)
        });
    }
}

fn fisher_yates<R: Rng>(idx: &mut [usize], rng: &mut R) {
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
}

/// The split protocol for one trial: a deterministic shuffle under the
/// seed, the first [`TEST_SIZE`] rows as the test holdout, the next
/// `n_labeled` as labeled data (90-10 into train and validation, at least
/// one validation example), and the remainder unlabeled.
pub fn make_split(dataset: &Dataset, n_labeled: usize, seed: u64) -> Result<SplitView, DataError> {
    let n_total = dataset.len();
    let need = n_labeled + TEST_SIZE;
    if n_total < need {
        return Err(DataError::InsufficientData { have: n_total, need });
    }
    if n_labeled < 2 {
        return Err(DataError::InsufficientData { have: n_labeled, need: 2 });
    }
    let mut idx: Vec<usize> = (0..n_total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fisher_yates(&mut idx, &mut rng);

    let test_idx = idx[..TEST_SIZE].to_vec();
    let labeled = &idx[TEST_SIZE..TEST_SIZE + n_labeled];
    let n_val = ((0.1 * n_labeled as f64).round() as usize).max(1);
    let n_train = n_labeled - n_val;
    let labeled_train_idx = labeled[..n_train].to_vec();
    let validation_idx = labeled[n_train..].to_vec();
    let unlabeled_idx = idx[TEST_SIZE + n_labeled..].to_vec();

    Ok(SplitView::from_indices(
        dataset,
        seed,
        n_labeled,
        labeled_train_idx,
        validation_idx,
        test_idx,
        unlabeled_idx,
    ))
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, DataError> {
    if pred.is_empty() || truth.is_empty() {
        return Err(DataError::EmptyVectors);
    }
    if pred.len() != truth.len() {
        return Err(DataError::LengthMismatch { left: pred.len(), right: truth.len() });
    }
    let mse = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

/// `100·(base − method)/base`; negative when the method is worse than the
/// baseline.
pub fn percent_reduction(rmse_base: f64, rmse_method: f64) -> Result<f64, DataError> {
    if !(rmse_base > 0.0) {
        return Err(DataError::ZeroBaseline);
    }
    Ok(100.0 * (rmse_base - rmse_method) / rmse_base)
}

/// Synthetic regression tasks used by the desk-scale experiments.
pub mod synth {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    /// 1-D task `y = sin(x) + ε` with `x` uniform on `[x_lo, x_hi]`.
    pub fn sine_dataset(n: usize, x_lo: f64, x_hi: f64, noise_std: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.gen_range(x_lo..x_hi);
            let eps: f64 = StandardNormal.sample(&mut rng);
            xs.push(x);
            ys.push(x.sin() + noise_std * eps);
        }
        Dataset {
            name: String::from("synth-sine"),
            x: Matrix::from_fn(n, 1, |i, _| xs[i]),
            y: ys,
        }
    }

    /// Spatial composition task: two coordinate columns carrying a smooth
    /// signal, followed by four distractor columns contributing a
    /// high-frequency nuisance term.
    pub fn spatial_dataset(n: usize, distractor_amp: f64, noise_std: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 6;
        let mut x = Matrix::zeros(n, d);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            for j in 0..d {
                x.set(i, j, rng.gen_range(-2.0..2.0));
            }
            let (c0, c1) = (x.get(i, 0), x.get(i, 1));
            let (d0, d1, d2, d3) = (x.get(i, 2), x.get(i, 3), x.get(i, 4), x.get(i, 5));
            let smooth = c0.sin() + c1.cos();
            let nuisance = (3.0 * (d0 + d2)).sin() * (3.0 * (d1 - d3)).cos();
            let eps: f64 = StandardNormal.sample(&mut rng);
            y.push(smooth + distractor_amp * nuisance + noise_std * eps);
        }
        Dataset { name: String::from("synth-spatial"), x, y }
    }
}
