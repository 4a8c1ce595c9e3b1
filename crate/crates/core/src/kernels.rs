//! Covariance functions over embeddings: RBF and polynomial base kernels,
//! a sum composition over disjoint column blocks (used to pair a raw
//! spatial kernel with a deep feature kernel), the deep kernel that
//! chains the MLP into a base kernel, and reverse-mode gradients with
//! respect to the log-domain hyperparameters and the kernel inputs.
//!
//! All hyperparameters live in the log domain so the optimizer can move
//! them unconstrained while the realized signal variance, squared length
//! scale and noise variance stay positive.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;


use crate::linalg::{dot, Matrix};
use crate::net::{mlp_forward, ForwardCache, MlpParams, NetError};

#[derive(Debug, Clone, PartialEq)]
pub enum KernelError {
    DimensionMismatch { left: usize, right: usize },
    SplitOutOfRange { split: usize, cols: usize },
    NotSquare { rows: usize, cols: usize },
    NotSumKernel,
    Net(NetError),
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch { left, right } => {
                write!(f, "inputs have {left} and {right} columns, expected equal")
            }
            Self::SplitOutOfRange { split, cols } => {
                write!(f, "feature split {split} out of range for {cols} columns")
            }
            Self::NotSquare { rows, cols } => {
                write!(f, "matrix is {rows}x{cols}, expected square")
            }
            Self::NotSumKernel => write!(f, "operation requires a Sum kernel"),
            Self::Net(e) => write!(f, "embedding network: {e}"),
        }
    }
}

impl core::error::Error for KernelError {}

impl From<NetError> for KernelError {
    fn from(e: NetError) -> Self {
        Self::Net(e)
    }
}

/// Base kernel family. `Sum` composes two kernels over the column blocks
/// `[0, feature_split)` and `[feature_split, cols)` of its input; the
/// summands carry their own signal/length parameters while noise variance
/// is carried once at the top level.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    Rbf,
    Polynomial { degree: u32 },
    Sum {
        left: Box<KernelParams>,
        right: Box<KernelParams>,
        feature_split: usize,
    },
}

/// Log-domain GP hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    /// ln of the signal variance (RBF) or of the squared dot-product
    /// scale (polynomial).
    pub log_signal_var: f64,
    /// ln of the squared length scale (RBF) or of the squared offset
    /// (polynomial).
    pub log_length_scale_sq: f64,
    /// ln of the observation noise variance. Only the top-level value of
    /// a `Sum` is used.
    pub log_noise_var: f64,
    pub kind: KernelKind,
}

impl KernelParams {
    /// RBF kernel with all raw parameters initialized to 1 (all logs 0).
    pub fn rbf() -> Self {
        Self {
            log_signal_var: 0.0,
            log_length_scale_sq: 0.0,
            log_noise_var: 0.0,
            kind: KernelKind::Rbf,
        }
    }

    pub fn polynomial(degree: u32) -> Self {
        Self {
            log_signal_var: 0.0,
            log_length_scale_sq: 0.0,
            log_noise_var: 0.0,
            kind: KernelKind::Polynomial { degree },
        }
    }

    /// Sum of two kernels over disjoint column blocks, split before
    /// column `feature_split`. Noise lives at this level; the summands'
    /// noise fields are ignored.
    pub fn sum(left: KernelParams, right: KernelParams, feature_split: usize) -> Self {
        Self {
            log_signal_var: 0.0,
            log_length_scale_sq: 0.0,
            log_noise_var: 0.0,
            kind: KernelKind::Sum {
                left: Box::new(left),
                right: Box::new(right),
                feature_split,
            },
        }
    }

    pub fn signal_var(&self) -> f64 {
        self.log_signal_var.exp()
    }

    pub fn noise_var(&self) -> f64 {
        self.log_noise_var.exp()
    }

    /// Number of trainable log parameters, noise included.
    pub fn param_count(&self) -> usize {
        self.leaf_param_count() + 1
    }

    fn leaf_param_count(&self) -> usize {
        match &self.kind {
            KernelKind::Rbf | KernelKind::Polynomial { .. } => 2,
            KernelKind::Sum { left, right, .. } => {
                left.leaf_param_count() + right.leaf_param_count()
            }
        }
    }

    /// Trainable log parameters as a flat vector: kernel parameters in
    /// depth-first order, then the top-level noise.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.push_leaf_params(&mut out);
        out.push(self.log_noise_var);
        out
    }

    fn push_leaf_params(&self, out: &mut Vec<f64>) {
        match &self.kind {
            KernelKind::Rbf | KernelKind::Polynomial { .. } => {
                out.push(self.log_signal_var);
                out.push(self.log_length_scale_sq);
            }
            KernelKind::Sum { left, right, .. } => {
                left.push_leaf_params(out);
                right.push_leaf_params(out);
            }
        }
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "kernel parameter count");
        let used = self.assign_leaf_params(flat);
        self.log_noise_var = flat[used];
    }

    fn assign_leaf_params(&mut self, flat: &[f64]) -> usize {
        match &mut self.kind {
            KernelKind::Rbf | KernelKind::Polynomial { .. } => {
                self.log_signal_var = flat[0];
                self.log_length_scale_sq = flat[1];
                2
            }
            KernelKind::Sum { left, right, .. } => {
                let l = left.assign_leaf_params(flat);
                let r = right.assign_leaf_params(&flat[l..]);
                l + r
            }
        }
    }
}

/// Intermediates kept by a cached kernel evaluation; consumed by
/// [`kernel_backward`].
#[derive(Debug, Clone)]
pub enum KernelCache {
    /// RBF / polynomial: inputs, kernel values, and the pairwise squared
    /// distances (RBF) or dot products (polynomial).
    Dense {
        a: Matrix,
        b: Matrix,
        k: Matrix,
        pairwise: Matrix,
    },
    Sum {
        left: Box<KernelCache>,
        right: Box<KernelCache>,
        split: usize,
        cols: usize,
    },
}

/// Base kernel Gram block between the rows of `a` and the rows of `b`.
/// Observation noise is never added here; see [`add_noise_diag`].
pub fn kernel_matrix(params: &KernelParams, a: &Matrix, b: &Matrix) -> Result<Matrix, KernelError> {
    kernel_matrix_cached(params, a, b).map(|(k, _)| k)
}

/// As [`kernel_matrix`], additionally returning the cache for the
/// backward pass.
pub fn kernel_matrix_cached(
    params: &KernelParams,
    a: &Matrix,
    b: &Matrix,
) -> Result<(Matrix, KernelCache), KernelError> {
    if a.cols() != b.cols() {
        return Err(KernelError::DimensionMismatch { left: a.cols(), right: b.cols() });
    }
    match &params.kind {
        KernelKind::Rbf => {
            let s2 = params.log_signal_var.exp();
            let l2 = params.log_length_scale_sq.exp();
            let sqdist = Matrix::from_fn(a.rows(), b.rows(), |i, j| a.row_sqdist(i, b, j));
            let k = Matrix::from_fn(a.rows(), b.rows(), |i, j| {
                s2 * (-sqdist.get(i, j) / (2.0 * l2)).exp()
            });
            Ok((
                k.clone(),
                KernelCache::Dense { a: a.clone(), b: b.clone(), k, pairwise: sqdist },
            ))
        }
        KernelKind::Polynomial { degree } => {
            let pf = (0.5 * params.log_signal_var).exp();
            let pl = (0.5 * params.log_length_scale_sq).exp();
            let dots = Matrix::from_fn(a.rows(), b.rows(), |i, j| dot(a.row(i), b.row(j)));
            let k = Matrix::from_fn(a.rows(), b.rows(), |i, j| {
                (pf * dots.get(i, j) + pl).powi(*degree as i32)
            });
            Ok((
                k.clone(),
                KernelCache::Dense { a: a.clone(), b: b.clone(), k, pairwise: dots },
            ))
        }
        KernelKind::Sum { left, right, feature_split } => {
            let split = *feature_split;
            if split == 0 || split >= a.cols() {
                return Err(KernelError::SplitOutOfRange { split, cols: a.cols() });
            }
            let (kl, cl) = kernel_matrix_cached(left, &a.col_block(0, split), &b.col_block(0, split))?;
            let (kr, cr) = kernel_matrix_cached(
                right,
                &a.col_block(split, a.cols()),
                &b.col_block(split, b.cols()),
            )?;
            let k = kl.add(&kr);
            Ok((
                k,
                KernelCache::Sum {
                    left: Box::new(cl),
                    right: Box::new(cr),
                    split,
                    cols: a.cols(),
                },
            ))
        }
    }
}

/// Sum-composition entry point with the `Sum` contract checked up front.
pub fn sum_kernel_matrix(
    params: &KernelParams,
    a: &Matrix,
    b: &Matrix,
) -> Result<Matrix, KernelError> {
    match &params.kind {
        KernelKind::Sum { .. } => kernel_matrix(params, a, b),
        _ => Err(KernelError::NotSumKernel),
    }
}

/// Adds the observation noise variance to the diagonal of a square
/// training covariance: `k + φₙ²·I`.
pub fn add_noise_diag(k: &Matrix, params: &KernelParams) -> Result<Matrix, KernelError> {
    if !k.is_square() {
        return Err(KernelError::NotSquare { rows: k.rows(), cols: k.cols() });
    }
    let noise = params.noise_var();
    let mut out = k.clone();
    for i in 0..out.rows() {
        let v = out.get(i, i) + noise;
        out.set(i, i, v);
    }
    Ok(out)
}

/// Cache of a deep kernel evaluation: the two forward passes plus the
/// base-kernel cache over the embeddings.
#[derive(Debug, Clone)]
pub struct DeepKernelCache {
    pub forward_a: ForwardCache,
    pub forward_b: ForwardCache,
    pub kernel: KernelCache,
}

/// Deep kernel: embeds both inputs through the network and evaluates the
/// base kernel on the embeddings.
pub fn deep_kernel_matrix(
    kp: &KernelParams,
    mlp: &MlpParams,
    a: &Matrix,
    b: &Matrix,
) -> Result<(Matrix, DeepKernelCache), KernelError> {
    let (ea, forward_a) = mlp_forward(mlp, a)?;
    let (eb, forward_b) = mlp_forward(mlp, b)?;
    let (k, kernel) = kernel_matrix_cached(kp, &ea, &eb)?;
    Ok((k, DeepKernelCache { forward_a, forward_b, kernel }))
}

/// Gradients of `⟨d_k, K⟩` with respect to the flattened log parameters
/// (aligned with [`KernelParams::flatten`]; the noise slot of this path
/// is zero) and with respect to both kernel inputs.
pub fn kernel_backward(
    params: &KernelParams,
    cache: &KernelCache,
    d_k: &Matrix,
) -> Result<(Vec<f64>, Matrix, Matrix), KernelError> {
    let (leaf, d_a, d_b) = backward_leaf(params, cache, d_k)?;
    let mut d_params = leaf;
    d_params.push(0.0); // noise is not part of the base kernel values
    Ok((d_params, d_a, d_b))
}

fn backward_leaf(
    params: &KernelParams,
    cache: &KernelCache,
    d_k: &Matrix,
) -> Result<(Vec<f64>, Matrix, Matrix), KernelError> {
    match (&params.kind, cache) {
        (KernelKind::Rbf, KernelCache::Dense { a, b, k, pairwise }) => {
            if d_k.rows() != k.rows() || d_k.cols() != k.cols() {
                return Err(KernelError::DimensionMismatch { left: d_k.rows(), right: k.rows() });
            }
            let l2 = params.log_length_scale_sq.exp();
            let mut d_ls = 0.0;
            let mut d_ll = 0.0;
            let mut d_a = Matrix::zeros(a.rows(), a.cols());
            let mut d_b = Matrix::zeros(b.rows(), b.cols());
            for i in 0..k.rows() {
                for j in 0..k.cols() {
                    let w = d_k.get(i, j) * k.get(i, j);
                    if w == 0.0 {
                        continue;
                    }
                    d_ls += w;
                    d_ll += w * pairwise.get(i, j) / (2.0 * l2);
                    for c in 0..a.cols() {
                        let diff = (b.get(j, c) - a.get(i, c)) / l2;
                        d_a.set(i, c, d_a.get(i, c) + w * diff);
                        d_b.set(j, c, d_b.get(j, c) - w * diff);
                    }
                }
            }
            Ok((vec![d_ls, d_ll], d_a, d_b))
        }
        (KernelKind::Polynomial { degree }, KernelCache::Dense { a, b, pairwise, .. }) => {
            let p = *degree as i32;
            let pf = (0.5 * params.log_signal_var).exp();
            let pl = (0.5 * params.log_length_scale_sq).exp();
            let mut d_ls = 0.0;
            let mut d_ll = 0.0;
            let mut d_a = Matrix::zeros(a.rows(), a.cols());
            let mut d_b = Matrix::zeros(b.rows(), b.cols());
            for i in 0..d_k.rows() {
                for j in 0..d_k.cols() {
                    let g = d_k.get(i, j);
                    if g == 0.0 {
                        continue;
                    }
                    let u = pf * pairwise.get(i, j) + pl;
                    let w = g * p as f64 * u.powi(p - 1);
                    d_ls += w * pairwise.get(i, j) * pf / 2.0;
                    d_ll += w * pl / 2.0;
                    for c in 0..a.cols() {
                        d_a.set(i, c, d_a.get(i, c) + w * pf * b.get(j, c));
                        d_b.set(j, c, d_b.get(j, c) + w * pf * a.get(i, c));
                    }
                }
            }
            Ok((vec![d_ls, d_ll], d_a, d_b))
        }
        (KernelKind::Sum { left, right, .. }, KernelCache::Sum { left: cl, right: cr, .. }) => {
            let (gl, dal, dbl) = backward_leaf(left, cl, d_k)?;
            let (gr, dar, dbr) = backward_leaf(right, cr, d_k)?;
            let mut grads = gl;
            grads.extend_from_slice(&gr);
            Ok((grads, dal.hstack(&dar), dbl.hstack(&dbr)))
        }
        _ => Err(KernelError::DimensionMismatch { left: 0, right: 0 }),
    }
}

/// `k(xᵢ, xᵢ)` for each row of `x` — the prior variance of each query
/// point.
pub fn kernel_diag(params: &KernelParams, x: &Matrix) -> Result<Vec<f64>, KernelError> {
    match &params.kind {
        KernelKind::Rbf => Ok(vec![params.log_signal_var.exp(); x.rows()]),
        KernelKind::Polynomial { degree } => {
            let pf = (0.5 * params.log_signal_var).exp();
            let pl = (0.5 * params.log_length_scale_sq).exp();
            Ok((0..x.rows())
                .map(|i| (pf * dot(x.row(i), x.row(i)) + pl).powi(*degree as i32))
                .collect())
        }
        KernelKind::Sum { left, right, feature_split } => {
            let split = *feature_split;
            if split == 0 || split >= x.cols() {
                return Err(KernelError::SplitOutOfRange { split, cols: x.cols() });
            }
            let dl = kernel_diag(left, &x.col_block(0, split))?;
            let dr = kernel_diag(right, &x.col_block(split, x.cols()))?;
            Ok(dl.iter().zip(&dr).map(|(a, b)| a + b).collect())
        }
    }
}

/// Gradients of `⟨d_diag, diag⟩` with respect to the flattened log
/// parameters (noise slot zero) and the query inputs.
pub fn kernel_diag_backward(
    params: &KernelParams,
    x: &Matrix,
    d_diag: &[f64],
) -> Result<(Vec<f64>, Matrix), KernelError> {
    let (leaf, d_x) = diag_backward_leaf(params, x, d_diag)?;
    let mut d_params = leaf;
    d_params.push(0.0);
    Ok((d_params, d_x))
}

fn diag_backward_leaf(
    params: &KernelParams,
    x: &Matrix,
    d_diag: &[f64],
) -> Result<(Vec<f64>, Matrix), KernelError> {
    match &params.kind {
        KernelKind::Rbf => {
            let s2 = params.log_signal_var.exp();
            let d_ls = s2 * d_diag.iter().sum::<f64>();
            Ok((vec![d_ls, 0.0], Matrix::zeros(x.rows(), x.cols())))
        }
        KernelKind::Polynomial { degree } => {
            let p = *degree as i32;
            let pf = (0.5 * params.log_signal_var).exp();
            let pl = (0.5 * params.log_length_scale_sq).exp();
            let mut d_ls = 0.0;
            let mut d_ll = 0.0;
            let mut d_x = Matrix::zeros(x.rows(), x.cols());
            for i in 0..x.rows() {
                let rho = dot(x.row(i), x.row(i));
                let u = pf * rho + pl;
                let w = d_diag[i] * p as f64 * u.powi(p - 1);
                d_ls += w * rho * pf / 2.0;
                d_ll += w * pl / 2.0;
                for c in 0..x.cols() {
                    d_x.set(i, c, w * pf * 2.0 * x.get(i, c));
                }
            }
            Ok((vec![d_ls, d_ll], d_x))
        }
        KernelKind::Sum { left, right, feature_split } => {
            let split = *feature_split;
            let (gl, dxl) = diag_backward_leaf(left, &x.col_block(0, split), d_diag)?;
            let (gr, dxr) = diag_backward_leaf(right, &x.col_block(split, x.cols()), d_diag)?;
            let mut grads = gl;
            grads.extend_from_slice(&gr);
            Ok((grads, dxl.hstack(&dxr)))
        }
    }
}
