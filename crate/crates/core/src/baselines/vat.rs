//! Virtual adversarial training adapted to regression. The model output
//! is read as the mean of a Gaussian with fixed std `σ`, so the
//! likelihood term is squared error and the local distributional
//! smoothness term is the KL divergence between the Gaussian at an input
//! and at its adversarially perturbed neighbor,
//! `(h(x) − h(x+r))²/(2σ²)`.
//!
//! The adversarial direction comes from one finite-difference power
//! iteration: probe a random unit direction scaled by `ξ`, take the
//! gradient of the KL there, and rescale it to norm `ε`. The direction is
//! a constant during the outer gradient.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::rmse;
use crate::linalg::Matrix;
use crate::net::{adam_step, mlp_backward, mlp_forward, AdamState, MlpParams};

use super::BaselineError;

#[derive(Debug, Clone)]
pub struct VatConfig {
    /// Norm of the adversarial perturbation.
    pub epsilon: f64,
    /// Weight of the smoothness term.
    pub lambda: f64,
    /// Fixed output std of the Gaussian observation model.
    pub sigma: f64,
    /// Scale of the finite-difference probe.
    pub xi: f64,
}

impl Default for VatConfig {
    fn default() -> Self {
        Self { epsilon: 1.0, lambda: 1.0, sigma: 1.0, xi: 1e-6 }
    }
}

fn check_scalar_output(mlp: &MlpParams) -> Result<(), BaselineError> {
    if mlp.output_dim() != 1 {
        return Err(BaselineError::NotScalarOutput { got: mlp.output_dim() });
    }
    Ok(())
}

/// One-step finite-difference power iteration: per input row, the
/// direction of steepest KL growth rescaled to norm `ε`. Rows where the
/// probe gradient vanishes fall back to the probe direction itself, so
/// the returned rows always have norm exactly `ε`.
pub fn adversarial_directions<R: Rng>(
    mlp: &MlpParams,
    x: &Matrix,
    config: &VatConfig,
    rng: &mut R,
) -> Result<Matrix, BaselineError> {
    check_scalar_output(mlp)?;
    let (rows, cols) = (x.rows(), x.cols());
    // random unit probes
    let mut probe = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let mut norm2 = 0.0;
        for j in 0..cols {
            let g: f64 = StandardNormal.sample(rng);
            probe.set(i, j, g);
            norm2 += g * g;
        }
        let norm = norm2.sqrt();
        if norm > 0.0 {
            for j in 0..cols {
                probe.set(i, j, probe.get(i, j) / norm);
            }
        } else {
            probe.set(i, 0, 1.0);
        }
    }

    let (h0, _) = mlp_forward(mlp, x)?;
    let perturbed = Matrix::from_fn(rows, cols, |i, j| x.get(i, j) + config.xi * probe.get(i, j));
    let (h1, cache) = mlp_forward(mlp, &perturbed)?;
    let sigma_sq = config.sigma * config.sigma;
    let d_out = Matrix::from_fn(rows, 1, |i, _| (h1.get(i, 0) - h0.get(i, 0)) / sigma_sq);
    let (_, grad) = mlp_backward(mlp, &cache, &d_out)?;

    let mut r_adv = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let norm = grad.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-300 {
            for j in 0..cols {
                r_adv.set(i, j, config.epsilon * grad.get(i, j) / norm);
            }
        } else {
            for j in 0..cols {
                r_adv.set(i, j, config.epsilon * probe.get(i, j));
            }
        }
    }
    Ok(r_adv)
}

/// Loss value, its components and the parameter gradients at one point.
#[derive(Debug, Clone)]
pub struct VatEval {
    pub loss: f64,
    pub mse: f64,
    /// Mean KL penalty over all (labeled and unlabeled) points.
    pub lds: f64,
    pub d_mlp: crate::net::MlpGrads,
}

/// `MSE(labeled) + λ·mean over all points of (h(x) − h(x+r_adv))²/(2σ²)`.
/// Gradients flow through both branches of the squared difference; the
/// adversarial direction itself is constant.
pub fn vat_loss<R: Rng>(
    mlp: &MlpParams,
    x_l: &Matrix,
    y_l: &[f64],
    x_u: &Matrix,
    config: &VatConfig,
    rng: &mut R,
) -> Result<VatEval, BaselineError> {
    let all = if x_u.rows() > 0 { x_l.vstack(x_u) } else { x_l.clone() };
    let r_adv = adversarial_directions(mlp, &all, config, rng)?;
    vat_loss_given_directions(mlp, x_l, y_l, x_u, &r_adv, config)
}

/// [`vat_loss`] with the adversarial directions supplied by the caller —
/// the form actually differentiated, and the hook for gradient checks.
pub fn vat_loss_given_directions(
    mlp: &MlpParams,
    x_l: &Matrix,
    y_l: &[f64],
    x_u: &Matrix,
    r_adv: &Matrix,
    config: &VatConfig,
) -> Result<VatEval, BaselineError> {
    check_scalar_output(mlp)?;
    let n = x_l.rows();
    if n == 0 {
        return Err(BaselineError::EmptyTrainingSet);
    }
    if y_l.len() != n {
        return Err(BaselineError::LengthMismatch { left: n, right: y_l.len() });
    }
    let all = if x_u.rows() > 0 { x_l.vstack(x_u) } else { x_l.clone() };
    let total = all.rows();
    if r_adv.rows() != total {
        return Err(BaselineError::LengthMismatch { left: r_adv.rows(), right: total });
    }
    let perturbed =
        Matrix::from_fn(total, all.cols(), |i, j| all.get(i, j) + r_adv.get(i, j));

    let (h, cache) = mlp_forward(mlp, &all)?;
    let (h_pert, cache_pert) = mlp_forward(mlp, &perturbed)?;

    let sigma_sq = config.sigma * config.sigma;
    let mut mse = 0.0;
    let mut lds = 0.0;
    let mut d_h = Matrix::zeros(total, 1);
    let mut d_h_pert = Matrix::zeros(total, 1);
    for i in 0..total {
        let diff = h.get(i, 0) - h_pert.get(i, 0);
        lds += diff * diff / (2.0 * sigma_sq);
        let g = config.lambda * diff / (sigma_sq * total as f64);
        d_h.set(i, 0, g);
        d_h_pert.set(i, 0, -g);
        if i < n {
            let e = h.get(i, 0) - y_l[i];
            mse += e * e;
            d_h.set(i, 0, d_h.get(i, 0) + 2.0 * e / n as f64);
        }
    }
    mse /= n as f64;
    lds /= total as f64;

    let (mut grads, _) = mlp_backward(mlp, &cache, &d_h)?;
    let (grads_pert, _) = mlp_backward(mlp, &cache_pert, &d_h_pert)?;
    grads.add_assign(&grads_pert);

    Ok(VatEval { loss: mse + config.lambda * lds, mse, lds, d_mlp: grads })
}

#[derive(Debug, Clone)]
pub struct VatTrainConfig {
    pub vat: VatConfig,
    /// Hidden layout of the scalar-output network.
    pub hidden_layers: Vec<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub unlabeled_batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for VatTrainConfig {
    fn default() -> Self {
        Self {
            vat: VatConfig::default(),
            hidden_layers: alloc::vec![100, 50, 50, 2],
            lr: 1e-3,
            weight_decay: 1e-4,
            unlabeled_batch: 50,
            max_epochs: 500,
            patience: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VatModel {
    pub mlp: MlpParams,
    pub best_val_rmse: f64,
    pub best_epoch: usize,
}

impl VatModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, BaselineError> {
        let (h, _) = mlp_forward(&self.mlp, x)?;
        Ok(h.col_to_vec(0))
    }
}

/// Mini-batch VAT training with validation early stopping, in the
/// caller's (standardized) units.
pub fn vat_train(
    config: &VatTrainConfig,
    x_l: &Matrix,
    y_l: &[f64],
    x_u: &Matrix,
    x_val: &Matrix,
    y_val: &[f64],
) -> Result<VatModel, BaselineError> {
    if x_l.rows() == 0 {
        return Err(BaselineError::EmptyTrainingSet);
    }
    if x_val.rows() == 0 && config.max_epochs > 0 {
        return Err(BaselineError::EmptyValidationSet);
    }
    let d = x_l.cols();
    let mut sizes = Vec::with_capacity(config.hidden_layers.len() + 2);
    sizes.push(d);
    sizes.extend_from_slice(&config.hidden_layers);
    sizes.push(1);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mlp = MlpParams::init(&sizes, &mut rng);
    let mut adam = AdamState::new(mlp.param_count(), config.lr, config.weight_decay);

    let m = x_u.rows();
    let batch = config.unlabeled_batch.max(1);
    let mut order: Vec<usize> = (0..m).collect();

    let mut best = mlp.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        if m == 0 {
            let eval = vat_loss(&mlp, x_l, y_l, &Matrix::zeros(0, d), &config.vat, &mut rng)?;
            if !eval.loss.is_finite() {
                return Err(BaselineError::Diverged { epoch });
            }
            let mut flat = mlp.flatten();
            adam_step(&mut adam, &mut flat, &eval.d_mlp.flatten())?;
            mlp.assign_from_flat(&flat)?;
        } else {
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            for chunk in order.chunks(batch) {
                let xb = Matrix::from_fn(chunk.len(), d, |i, j| x_u.get(chunk[i], j));
                let eval = vat_loss(&mlp, x_l, y_l, &xb, &config.vat, &mut rng)?;
                if !eval.loss.is_finite() {
                    return Err(BaselineError::Diverged { epoch });
                }
                let mut flat = mlp.flatten();
                adam_step(&mut adam, &mut flat, &eval.d_mlp.flatten())?;
                mlp.assign_from_flat(&flat)?;
            }
        }

        let (pred, _) = mlp_forward(&mlp, x_val)?;
        let val_rmse = rmse(&pred.col_to_vec(0), y_val)?;
        if val_rmse < best_val {
            best_val = val_rmse;
            best_epoch = epoch;
            best = mlp.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    Ok(VatModel { mlp: best, best_val_rmse: best_val, best_epoch })
}
