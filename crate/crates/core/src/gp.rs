//! Exact Gaussian-process computations: the negative log marginal
//! likelihood of the labeled targets, the posterior predictive
//! distribution obtained by conditioning, the summed predictive variance
//! over a batch of unlabeled points, and the analytic adjoints of both
//! losses with respect to the covariance blocks.
//!
//! The predictive variance here is that of the latent function, so the
//! observation noise never enters the variance loss or the reported
//! predictive variances.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;


use crate::linalg::{
    cholesky, dot, forward_substitute, logdet, solve_chol, CholFactor, JitterPolicy, LinalgError,
    Matrix,
};

/// Slack below zero tolerated before a predictive variance is treated as
/// a conditioning bug rather than floating-point noise.
pub const VARIANCE_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum GpError {
    Linalg(LinalgError),
    DimensionMismatch { expected: usize, got: usize },
    /// A predictive variance fell below `-VARIANCE_CLAMP`.
    NegativeVariance { value: f64 },
}

impl fmt::Display for GpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linalg(e) => write!(f, "{e}"),
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::NegativeVariance { value } => {
                write!(f, "predictive variance {value:e} is negative beyond tolerance")
            }
        }
    }
}

impl core::error::Error for GpError {}

impl From<LinalgError> for GpError {
    fn from(e: LinalgError) -> Self {
        Self::Linalg(e)
    }
}

/// Posterior state for one query batch: the training factorization, the
/// solved target weights and the marginal predictive moments.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    pub chol: CholFactor,
    pub alpha: Vec<f64>,
    pub pred_mean: Vec<f64>,
    pub pred_var: Vec<f64>,
}

impl GpPosterior {
    pub fn compute(
        chol: CholFactor,
        alpha: Vec<f64>,
        k_cross: &Matrix,
        k_test_diag: &[f64],
    ) -> Result<Self, GpError> {
        let (pred_mean, pred_var) = posterior_predict(&chol, &alpha, k_cross, k_test_diag)?;
        Ok(Self { chol, alpha, pred_mean, pred_var })
    }
}

/// Negative log marginal likelihood of `y` under a zero-mean GP with the
/// given noisy training covariance:
/// `½·yᵀK⁻¹y + ½·log|K| + (n/2)·ln 2π`.
///
/// Returns the Cholesky factor and `α = K⁻¹y` so callers can reuse them
/// for prediction and for the adjoint.
pub fn neg_log_marginal_likelihood(
    k_noisy: &Matrix,
    y: &[f64],
    policy: &JitterPolicy,
) -> Result<(f64, CholFactor, Vec<f64>), GpError> {
    if k_noisy.rows() != y.len() {
        return Err(GpError::DimensionMismatch { expected: k_noisy.rows(), got: y.len() });
    }
    let chol = cholesky(k_noisy, policy)?;
    let alpha = solve_chol(&chol, &Matrix::column(y))?.col_to_vec(0);
    let n = y.len() as f64;
    let value = 0.5 * dot(y, &alpha) + 0.5 * logdet(&chol) + 0.5 * n * (2.0 * PI).ln();
    Ok((value, chol, alpha))
}

/// Posterior mean and latent variance at each query point:
/// `meanⱼ = k_crossⱼᵀ·α`, `varⱼ = k_test_diagⱼ − ‖L⁻¹k_crossⱼ‖²`.
///
/// Variances within [`VARIANCE_CLAMP`] below zero are clamped to zero.
pub fn posterior_predict(
    chol: &CholFactor,
    alpha: &[f64],
    k_cross: &Matrix,
    k_test_diag: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), GpError> {
    let n = chol.dim();
    if k_cross.rows() != n {
        return Err(GpError::DimensionMismatch { expected: n, got: k_cross.rows() });
    }
    if alpha.len() != n {
        return Err(GpError::DimensionMismatch { expected: n, got: alpha.len() });
    }
    let t = k_cross.cols();
    if k_test_diag.len() != t {
        return Err(GpError::DimensionMismatch { expected: t, got: k_test_diag.len() });
    }
    // v = L⁻¹ K_cross, one triangular solve for the whole batch
    let v = forward_substitute(chol.lower(), k_cross);
    let mut mean = Vec::with_capacity(t);
    let mut var = Vec::with_capacity(t);
    for j in 0..t {
        let mut m = 0.0;
        let mut explained = 0.0;
        for i in 0..n {
            m += k_cross.get(i, j) * alpha[i];
            let vij = v.get(i, j);
            explained += vij * vij;
        }
        let raw = k_test_diag[j] - explained;
        if raw < -VARIANCE_CLAMP {
            return Err(GpError::NegativeVariance { value: raw });
        }
        mean.push(m);
        var.push(raw.max(0.0));
    }
    Ok((mean, var))
}

/// Sum of the latent predictive variances over an unlabeled batch.
pub fn variance_loss(
    chol: &CholFactor,
    k_cross: &Matrix,
    k_test_diag: &[f64],
) -> Result<f64, GpError> {
    let alpha = vec![0.0; chol.dim()];
    let (_, var) = posterior_predict(chol, &alpha, k_cross, k_test_diag)?;
    Ok(var.iter().sum())
}

/// Adjoint of [`neg_log_marginal_likelihood`] with respect to the noisy
/// training covariance: `∂NLML/∂K = ½(K⁻¹ − ααᵀ)`.
///
/// The caller chains this into the kernel backward pass; the gradient of
/// the noise log-parameter is `trace(∂NLML/∂K)·φₙ²`.
pub fn mll_adjoint(chol: &CholFactor, alpha: &[f64]) -> Matrix {
    let n = chol.dim();
    let k_inv = solve_chol(chol, &Matrix::identity(n)).expect("identity RHS has matching dim");
    Matrix::from_fn(n, n, |i, j| 0.5 * (k_inv.get(i, j) - alpha[i] * alpha[j]))
}

/// Adjoint of [`variance_loss`]: gradients of `Σⱼ varⱼ` with respect to
/// the cross covariance, the query prior variances and the noisy training
/// covariance.
///
/// With `W = K⁻¹·K_cross`: `d_k_cross = −2W`, `d_k_test_diag = 1`, and
/// `d_K_train = W·Wᵀ`.
pub fn variance_adjoint(
    chol: &CholFactor,
    k_cross: &Matrix,
    k_test_diag: &[f64],
) -> Result<(Matrix, Vec<f64>, Matrix), GpError> {
    let n = chol.dim();
    if k_cross.rows() != n {
        return Err(GpError::DimensionMismatch { expected: n, got: k_cross.rows() });
    }
    if k_test_diag.len() != k_cross.cols() {
        return Err(GpError::DimensionMismatch {
            expected: k_cross.cols(),
            got: k_test_diag.len(),
        });
    }
    let w = solve_chol(chol, k_cross)?;
    let d_k_cross = w.scale(-2.0);
    let d_k_test_diag = vec![1.0; k_cross.cols()];
    let d_k_train = w.matmul(&w.transpose());
    Ok((d_k_cross, d_k_test_diag, d_k_train))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn nlml(k: &Matrix, y: &[f64]) -> (f64, CholFactor, Vec<f64>) {
        neg_log_marginal_likelihood(k, y, &JitterPolicy::default()).unwrap()
    }

    #[test]
    fn scalar_gaussian_densities() {
        let (v, _, _) = nlml(&Matrix::from_rows(&[&[2.0]]), &[0.0]);
        assert_close(v, 0.5 * (4.0 * PI).ln(), 1e-12);
        assert_close(v, 1.26551, 1e-5);

        let (v, _, _) = nlml(&Matrix::from_rows(&[&[1.0]]), &[1.0]);
        assert_close(v, 0.5 + 0.5 * (2.0 * PI).ln(), 1e-12);
        assert_close(v, 1.41894, 1e-5);
    }

    #[test]
    fn independent_standard_normals() {
        let (a, b) = (0.7, -1.3);
        let (v, _, _) = nlml(&Matrix::identity(2), &[a, b]);
        assert_close(v, 0.5 * (a * a + b * b) + (2.0 * PI).ln(), 1e-12);
    }

    #[test]
    fn nlml_rejects_length_mismatch() {
        let r = neg_log_marginal_likelihood(&Matrix::identity(2), &[1.0], &JitterPolicy::default());
        assert!(matches!(r, Err(GpError::DimensionMismatch { .. })));
    }

    #[test]
    fn noiseless_interpolation() {
        // test point equals the single labeled point, no noise
        let y = 0.8;
        let k = Matrix::from_rows(&[&[1.0]]);
        let (_, chol, alpha) = nlml(&k, &[y]);
        let k_cross = Matrix::from_rows(&[&[1.0]]);
        let (mean, var) = posterior_predict(&chol, &alpha, &k_cross, &[1.0]).unwrap();
        assert_close(mean[0], y, 1e-12);
        assert_close(var[0], 0.0, 1e-12);
    }

    #[test]
    fn unit_noise_shrinks_mean_toward_prior() {
        // K = 1 + 1 (noise), k* = 1: mean = y/2, var = 1 - 1/2
        let y = -0.4;
        let k = Matrix::from_rows(&[&[2.0]]);
        let (_, chol, alpha) = nlml(&k, &[y]);
        let (mean, var) =
            posterior_predict(&chol, &alpha, &Matrix::from_rows(&[&[1.0]]), &[1.0]).unwrap();
        assert_close(mean[0], y / 2.0, 1e-12);
        assert_close(var[0], 0.5, 1e-12);
    }

    #[test]
    fn far_test_point_recovers_prior() {
        let k = Matrix::from_rows(&[&[2.0]]);
        let (_, chol, alpha) = nlml(&k, &[3.0]);
        let (mean, var) =
            posterior_predict(&chol, &alpha, &Matrix::from_rows(&[&[0.0]]), &[1.0]).unwrap();
        assert_close(mean[0], 0.0, 1e-15);
        assert_close(var[0], 1.0, 1e-15);
    }

    #[test]
    fn variance_loss_examples() {
        // batch far from the data: sum of prior variances
        let (_, chol, _) = nlml(&Matrix::from_rows(&[&[1.0]]), &[0.0]);
        let k_cross = Matrix::zeros(1, 3);
        let loss = variance_loss(&chol, &k_cross, &[1.0, 1.0, 1.0]).unwrap();
        assert_close(loss, 3.0, 1e-15);

        // batch coinciding with the labeled point, noiseless: zero
        let k_cross = Matrix::from_rows(&[&[1.0]]);
        let loss = variance_loss(&chol, &k_cross, &[1.0]).unwrap();
        assert_close(loss, 0.0, 1e-12);

        // unit distance, unit scales: 1 - e^{-1}
        let kstar = (-0.5_f64).exp();
        let loss = variance_loss(&chol, &Matrix::from_rows(&[&[kstar]]), &[1.0]).unwrap();
        assert_close(loss, 1.0 - (-1.0_f64).exp(), 1e-12);
        assert_close(loss, 0.63212, 1e-5);
    }

    #[test]
    fn mll_adjoint_scalar_cases() {
        let (_, chol, alpha) = nlml(&Matrix::from_rows(&[&[1.0]]), &[0.0]);
        let d = mll_adjoint(&chol, &alpha);
        assert_close(d.get(0, 0), 0.5, 1e-12);

        let (_, chol, alpha) = nlml(&Matrix::from_rows(&[&[1.0]]), &[1.0]);
        let d = mll_adjoint(&chol, &alpha);
        assert_close(d.get(0, 0), 0.0, 1e-12);
    }

    #[test]
    fn variance_adjoint_closed_forms() {
        let (_, chol, _) = nlml(&Matrix::from_rows(&[&[1.0]]), &[0.0]);

        // prior regime: k_cross = 0
        let (d_cross, d_diag, d_train) =
            variance_adjoint(&chol, &Matrix::zeros(1, 2), &[1.0, 1.0]).unwrap();
        assert_eq!(d_cross, Matrix::zeros(1, 2));
        assert_eq!(d_diag, vec![1.0, 1.0]);
        assert_eq!(d_train, Matrix::zeros(1, 1));

        // 1x1: K = 1, k* = c
        let c = 0.37;
        let (d_cross, _, d_train) =
            variance_adjoint(&chol, &Matrix::from_rows(&[&[c]]), &[1.0]).unwrap();
        assert_close(d_cross.get(0, 0), -2.0 * c, 1e-12);
        assert_close(d_train.get(0, 0), c * c, 1e-12);
    }

    #[test]
    fn negative_variance_beyond_slack_is_an_error() {
        let (_, chol, alpha) = nlml(&Matrix::from_rows(&[&[1.0]]), &[0.0]);
        // claimed prior variance far below what the cross term explains
        let r = posterior_predict(&chol, &alpha, &Matrix::from_rows(&[&[1.0]]), &[0.5]);
        assert!(matches!(r, Err(GpError::NegativeVariance { .. })));
    }

    #[test]
    fn posterior_struct_carries_moments() {
        let (_, chol, alpha) = nlml(&Matrix::from_rows(&[&[2.0]]), &[1.0]);
        let post =
            GpPosterior::compute(chol, alpha, &Matrix::from_rows(&[&[1.0]]), &[1.0]).unwrap();
        assert_eq!(post.pred_mean.len(), 1);
        assert_eq!(post.pred_var.len(), 1);
        assert_close(post.pred_mean[0], 0.5, 1e-12);
        assert_close(post.pred_var[0], 0.5, 1e-12);
    }
}
