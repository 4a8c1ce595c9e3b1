//! Training loops for deep kernel regression with and without the
//! variance regularizer.
//!
//! The objective per step is `(1/n)·NLML + (α/m_batch)·Σ Var(f(x))` over
//! all labeled training points plus one mini-batch of unlabeled points.
//! Labeled data is always full batch (every labeled point enters each
//! Cholesky); the unlabeled pass defines the epoch. With `α = 0`, the
//! second term is skipped entirely and the loop is the plain supervised
//! trainer — the semi-supervised run reduces to it bit for bit.
//!
//! Two Adam instances step together each mini-batch: one over the network
//! weights, one over the log-domain kernel parameters. The validation set
//! drives early stopping and the α grid choice.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{rmse, DataError, SplitView};
use crate::gp::{
    mll_adjoint, neg_log_marginal_likelihood, posterior_predict, variance_adjoint, variance_loss,
    GpError,
};
use crate::kernels::{
    add_noise_diag, kernel_backward, kernel_diag, kernel_diag_backward, kernel_matrix,
    kernel_matrix_cached, KernelError, KernelParams,
};
use crate::linalg::{JitterPolicy, Matrix};
use crate::net::{adam_step, mlp_backward, mlp_forward, AdamState, MlpGrads, MlpParams, NetError};

#[derive(Debug, Clone, PartialEq)]
pub enum TrainerError {
    EmptyLabeledSet,
    EmptyValidationSet,
    /// Training loss became non-finite.
    Diverged { epoch: usize },
    /// Every arm of the α grid failed.
    NoViableAlpha,
    SpatialSplitOutOfRange { coord_cols: usize, input_dim: usize },
    Gp(GpError),
    Kernel(KernelError),
    Net(NetError),
    Data(DataError),
}

impl fmt::Display for TrainerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyLabeledSet => write!(f, "no labeled training points"),
            Self::EmptyValidationSet => write!(f, "no validation points for early stopping"),
            Self::Diverged { epoch } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}")
            }
            Self::NoViableAlpha => write!(f, "every alpha grid arm failed to train"),
            Self::SpatialSplitOutOfRange { coord_cols, input_dim } => write!(
                f,
                "spatial kernel needs 0 < coord_cols < input dim, got {coord_cols} of {input_dim}"
            ),
            Self::Gp(e) => write!(f, "{e}"),
            Self::Kernel(e) => write!(f, "{e}"),
            Self::Net(e) => write!(f, "{e}"),
            Self::Data(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for TrainerError {}

impl From<GpError> for TrainerError {
    fn from(e: GpError) -> Self {
        Self::Gp(e)
    }
}
impl From<KernelError> for TrainerError {
    fn from(e: KernelError) -> Self {
        Self::Kernel(e)
    }
}
impl From<NetError> for TrainerError {
    fn from(e: NetError) -> Self {
        Self::Net(e)
    }
}
impl From<DataError> for TrainerError {
    fn from(e: DataError) -> Self {
        Self::Data(e)
    }
}

/// Kernel choice for a training run.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    Rbf,
    Polynomial { degree: u32 },
    /// Sum of an RBF over the first `coord_cols` raw input columns and an
    /// RBF over the embedding of the remaining columns. The network never
    /// sees the coordinate block.
    SpatialSum { coord_cols: usize },
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Trade-off between the likelihood and variance terms; 0 recovers
    /// the purely supervised trainer.
    pub alpha: f64,
    pub alpha_grid: Vec<f64>,
    pub lr_net: f64,
    pub lr_gp: f64,
    pub unlabeled_batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
    pub embed_dim: usize,
    pub kernel: KernelChoice,
    pub jitter: JitterPolicy,
    /// Record a flat parameter snapshot after every epoch (trajectory
    /// comparisons in tests; off by default).
    pub record_param_trace: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            alpha_grid: vec![0.1, 1.0, 10.0],
            lr_net: 1e-3,
            lr_gp: 0.1,
            unlabeled_batch: 50,
            max_epochs: 500,
            patience: 20,
            weight_decay: 1e-4,
            seed: 0,
            hidden_layers: vec![100, 50, 50],
            embed_dim: 2,
            kernel: KernelChoice::Rbf,
            jitter: JitterPolicy::default(),
            record_param_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_rmse: f64,
}

/// A trained deep kernel model. Prediction is nonparametric in the
/// retained (standardized) labeled training block.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub mlp: MlpParams,
    pub kp: KernelParams,
    /// 0 for non-spatial kernels; otherwise the number of leading raw
    /// coordinate columns bypassing the network.
    pub coord_cols: usize,
    pub labeled_x: Matrix,
    pub labeled_y: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    pub jitter: JitterPolicy,
    /// Flat `[mlp | kernel]` snapshot after each epoch when tracing was
    /// requested.
    pub param_trace: Vec<Vec<f64>>,
}

/// Value and full gradient of the compound objective at one point.
#[derive(Debug, Clone)]
pub struct SemisupEval {
    pub loss: f64,
    pub nlml: f64,
    pub variance_sum: f64,
    pub d_mlp: MlpGrads,
    /// Aligned with [`KernelParams::flatten`].
    pub d_kernel: Vec<f64>,
}

/// Builds the GP input for a batch: the embedding itself, or
/// `[raw coordinate block | embedding of the rest]` for spatial kernels.
fn gp_input(
    mlp: &MlpParams,
    coord_cols: usize,
    x: &Matrix,
) -> Result<(Matrix, crate::net::ForwardCache), TrainerError> {
    if coord_cols == 0 {
        let (e, cache) = mlp_forward(mlp, x)?;
        Ok((e, cache))
    } else {
        if coord_cols >= x.cols() {
            return Err(TrainerError::SpatialSplitOutOfRange {
                coord_cols,
                input_dim: x.cols(),
            });
        }
        let coords = x.col_block(0, coord_cols);
        let feats = x.col_block(coord_cols, x.cols());
        let (e, cache) = mlp_forward(mlp, &feats)?;
        Ok((coords.hstack(&e), cache))
    }
}

/// Chains a GP-input cotangent back into network gradients, dropping the
/// raw coordinate block (its entries are data, not parameters).
fn gp_input_backward(
    mlp: &MlpParams,
    coord_cols: usize,
    cache: &crate::net::ForwardCache,
    d_z: &Matrix,
) -> Result<MlpGrads, TrainerError> {
    let d_embed = if coord_cols == 0 {
        d_z.clone()
    } else {
        d_z.col_block(coord_cols, d_z.cols())
    };
    let (grads, _) = mlp_backward(mlp, cache, &d_embed)?;
    Ok(grads)
}

/// The compound semi-supervised objective and its exact gradients.
///
/// `loss = (1/n)·NLML(X_L, y_L) + (α/m)·Σ Var(f(x))` over the unlabeled
/// batch; the variance term vanishes when `α = 0` or the batch is empty.
/// Gradients chain the likelihood and variance adjoints through the
/// kernel and the network. Weight decay is not part of this objective;
/// the optimizer applies it.
pub fn semisup_loss(
    mlp: &MlpParams,
    kp: &KernelParams,
    coord_cols: usize,
    x_l: &Matrix,
    y_l: &[f64],
    x_u_batch: &Matrix,
    alpha: f64,
    policy: &JitterPolicy,
) -> Result<SemisupEval, TrainerError> {
    let n = x_l.rows();
    if n == 0 {
        return Err(TrainerError::EmptyLabeledSet);
    }
    let m = x_u_batch.rows();
    let use_variance = alpha != 0.0 && m > 0;

    let (z_l, cache_l) = gp_input(mlp, coord_cols, x_l)?;
    let (k_ll, kc_ll) = kernel_matrix_cached(kp, &z_l, &z_l)?;
    let k_noisy = add_noise_diag(&k_ll, kp)?;
    let (nlml, chol, alpha_vec) = neg_log_marginal_likelihood(&k_noisy, y_l, policy)?;

    let inv_n = 1.0 / n as f64;
    let mut loss = inv_n * nlml;
    let mut d_k_noisy = mll_adjoint(&chol, &alpha_vec).scale(inv_n);

    let mut variance_sum = 0.0;
    let mut unlabeled_part = None;
    if use_variance {
        let (z_u, cache_u) = gp_input(mlp, coord_cols, x_u_batch)?;
        let (k_lu, kc_lu) = kernel_matrix_cached(kp, &z_l, &z_u)?;
        let diag_u = kernel_diag(kp, &z_u)?;
        variance_sum = variance_loss(&chol, &k_lu, &diag_u)?;
        let scale = alpha / m as f64;
        loss += scale * variance_sum;

        let (d_k_lu, d_diag, d_k_train) = variance_adjoint(&chol, &k_lu, &diag_u)?;
        d_k_noisy.add_assign(&d_k_train.scale(scale));
        unlabeled_part = Some((z_u, cache_u, kc_lu, d_k_lu.scale(scale), d_diag, scale));
    }

    // noise enters only through the diagonal of the noisy covariance
    let noise_var = kp.noise_var();
    let trace: f64 = (0..n).map(|i| d_k_noisy.get(i, i)).sum();
    let d_log_noise = trace * noise_var;

    let (mut d_kernel, d_za, d_zb) = kernel_backward(kp, &kc_ll, &d_k_noisy)?;
    let mut d_z_l = d_za;
    d_z_l.add_assign(&d_zb);

    let mut d_mlp = gp_input_backward(mlp, coord_cols, &cache_l, &d_z_l)?;
    if let Some((z_u, cache_u, kc_lu, d_k_lu, d_diag, scale)) = unlabeled_part {
        let (d_kp_cross, d_zl_cross, d_zu_cross) = kernel_backward(kp, &kc_lu, &d_k_lu)?;
        let scaled_d_diag: Vec<f64> = d_diag.iter().map(|v| v * scale).collect();
        let (d_kp_diag, d_zu_diag) = kernel_diag_backward(kp, &z_u, &scaled_d_diag)?;
        for (acc, v) in d_kernel.iter_mut().zip(&d_kp_cross) {
            *acc += v;
        }
        for (acc, v) in d_kernel.iter_mut().zip(&d_kp_diag) {
            *acc += v;
        }
        let grads_l = gp_input_backward(mlp, coord_cols, &cache_l, &d_zl_cross)?;
        d_mlp.add_assign(&grads_l);
        let mut d_z_u = d_zu_cross;
        d_z_u.add_assign(&d_zu_diag);
        let grads_u = gp_input_backward(mlp, coord_cols, &cache_u, &d_z_u)?;
        d_mlp.add_assign(&grads_u);
    }
    *d_kernel.last_mut().unwrap() += d_log_noise;

    Ok(SemisupEval { loss, nlml, variance_sum, d_mlp, d_kernel })
}

fn initial_kernel(choice: &KernelChoice) -> KernelParams {
    match choice {
        KernelChoice::Rbf => KernelParams::rbf(),
        KernelChoice::Polynomial { degree } => KernelParams::polynomial(*degree),
        KernelChoice::SpatialSum { coord_cols } => {
            KernelParams::sum(KernelParams::rbf(), KernelParams::rbf(), *coord_cols)
        }
    }
}

fn coord_cols_of(choice: &KernelChoice) -> usize {
    match choice {
        KernelChoice::SpatialSum { coord_cols } => *coord_cols,
        _ => 0,
    }
}

/// Posterior prediction in standardized space against a labeled block.
fn predict_standardized(
    mlp: &MlpParams,
    kp: &KernelParams,
    coord_cols: usize,
    x_l: &Matrix,
    y_l: &[f64],
    x_q: &Matrix,
    policy: &JitterPolicy,
) -> Result<(Vec<f64>, Vec<f64>), TrainerError> {
    let (z_l, _) = gp_input(mlp, coord_cols, x_l)?;
    let (z_q, _) = gp_input(mlp, coord_cols, x_q)?;
    let k_ll = kernel_matrix(kp, &z_l, &z_l)?;
    let k_noisy = add_noise_diag(&k_ll, kp)?;
    let (_, chol, alpha_vec) = neg_log_marginal_likelihood(&k_noisy, y_l, policy)?;
    let k_cross = kernel_matrix(kp, &z_l, &z_q)?;
    let diag = kernel_diag(kp, &z_q)?;
    Ok(posterior_predict(&chol, &alpha_vec, &k_cross, &diag)?)
}

/// Trains one model on a split. Each epoch shuffles the unlabeled pool,
/// walks it in mini-batches (one full-batch step when there is no
/// unlabeled data), evaluates validation RMSE, and keeps the parameters
/// of the best-validation epoch. Stops after `patience` epochs without
/// improvement or at `max_epochs`.
pub fn train(config: &TrainConfig, data: &SplitView) -> Result<TrainedModel, TrainerError> {
    let coord_cols = coord_cols_of(&config.kernel);
    let x_l = data.standardize_x(&data.labeled_train_x);
    let y_l = data.standardize_y(&data.labeled_train_y);
    let x_val = data.standardize_x(&data.validation_x);
    let x_u = data.standardize_x(&data.unlabeled_x);
    let n = x_l.rows();
    if n == 0 {
        return Err(TrainerError::EmptyLabeledSet);
    }
    if x_val.rows() == 0 && config.max_epochs > 0 {
        return Err(TrainerError::EmptyValidationSet);
    }
    let d = x_l.cols();
    if coord_cols >= d && coord_cols != 0 {
        return Err(TrainerError::SpatialSplitOutOfRange { coord_cols, input_dim: d });
    }

    let net_input = d - coord_cols;
    let mut sizes = Vec::with_capacity(config.hidden_layers.len() + 2);
    sizes.push(net_input);
    sizes.extend_from_slice(&config.hidden_layers);
    sizes.push(config.embed_dim);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mlp = MlpParams::init(&sizes, &mut rng);
    let mut kp = initial_kernel(&config.kernel);

    let mut adam_net = AdamState::new(mlp.param_count(), config.lr_net, config.weight_decay);
    let mut adam_gp = AdamState::new(kp.param_count(), config.lr_gp, 0.0);

    let m_total = x_u.rows();
    let batch = config.unlabeled_batch.max(1);

    let mut best_mlp = mlp.clone();
    let mut best_kp = kp.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut param_trace = Vec::new();

    let mut order: Vec<usize> = (0..m_total).collect();
    for epoch in 1..=config.max_epochs {
        let mut loss_sum = 0.0;
        let mut steps = 0;
        if m_total == 0 {
            let eval = semisup_loss(
                &mlp,
                &kp,
                coord_cols,
                &x_l,
                &y_l,
                &Matrix::zeros(0, d),
                config.alpha,
                &config.jitter,
            )?;
            if !eval.loss.is_finite() {
                return Err(TrainerError::Diverged { epoch });
            }
            take_step(&mut mlp, &mut kp, &eval, &mut adam_net, &mut adam_gp)?;
            loss_sum += eval.loss;
            steps += 1;
        } else {
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            for chunk in order.chunks(batch) {
                let x_batch = Matrix::from_fn(chunk.len(), d, |i, j| x_u.get(chunk[i], j));
                let eval = semisup_loss(
                    &mlp,
                    &kp,
                    coord_cols,
                    &x_l,
                    &y_l,
                    &x_batch,
                    config.alpha,
                    &config.jitter,
                )?;
                if !eval.loss.is_finite() {
                    return Err(TrainerError::Diverged { epoch });
                }
                take_step(&mut mlp, &mut kp, &eval, &mut adam_net, &mut adam_gp)?;
                loss_sum += eval.loss;
                steps += 1;
            }
        }

        let (val_pred_std, _) =
            predict_standardized(&mlp, &kp, coord_cols, &x_l, &y_l, &x_val, &config.jitter)?;
        let val_pred: Vec<f64> = val_pred_std.iter().map(|&z| data.unstandardize_y(z)).collect();
        let val_rmse = rmse(&val_pred, &data.validation_y)?;
        history.push(EpochRecord { epoch, mean_loss: loss_sum / steps as f64, val_rmse });
        if config.record_param_trace {
            let mut snap = mlp.flatten();
            snap.extend_from_slice(&kp.flatten());
            param_trace.push(snap);
        }

        if val_rmse < best_val {
            best_val = val_rmse;
            best_epoch = epoch;
            best_mlp = mlp.clone();
            best_kp = kp.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    Ok(TrainedModel {
        mlp: best_mlp,
        kp: best_kp,
        coord_cols,
        labeled_x: x_l,
        labeled_y: y_l,
        x_mean: data.x_mean.clone(),
        x_std: data.x_std.clone(),
        y_mean: data.y_mean,
        y_std: data.y_std,
        history,
        best_epoch,
        best_val_rmse: best_val,
        jitter: config.jitter.clone(),
        param_trace,
    })
}

fn take_step(
    mlp: &mut MlpParams,
    kp: &mut KernelParams,
    eval: &SemisupEval,
    adam_net: &mut AdamState,
    adam_gp: &mut AdamState,
) -> Result<(), TrainerError> {
    let mut net_flat = mlp.flatten();
    adam_step(adam_net, &mut net_flat, &eval.d_mlp.flatten())?;
    mlp.assign_from_flat(&net_flat)?;

    let mut kernel_flat = kp.flatten();
    adam_step(adam_gp, &mut kernel_flat, &eval.d_kernel)?;
    kp.assign_from_flat(&kernel_flat);
    Ok(())
}

/// Trains one model per grid value and returns the one with the lowest
/// validation RMSE, ties toward smaller α. Arms that diverge are
/// excluded; if every arm fails the last error is surfaced.
pub fn select_alpha(
    config: &TrainConfig,
    data: &SplitView,
) -> Result<(f64, TrainedModel), TrainerError> {
    if config.alpha_grid.is_empty() {
        return Err(TrainerError::NoViableAlpha);
    }
    let mut grid = config.alpha_grid.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best: Option<(f64, TrainedModel)> = None;
    let mut last_err = TrainerError::NoViableAlpha;
    for &alpha in &grid {
        let mut arm = config.clone();
        arm.alpha = alpha;
        match train(&arm, data) {
            Ok(model) => {
                let better = best
                    .as_ref()
                    .map(|(_, b)| model.best_val_rmse < b.best_val_rmse)
                    .unwrap_or(true);
                if better {
                    best = Some((alpha, model));
                }
            }
            Err(e @ TrainerError::Diverged { .. }) => last_err = e,
            Err(e) => return Err(e),
        }
    }
    best.ok_or(last_err)
}

/// Posterior prediction at raw-unit query points; the mean comes back in
/// original target units and the variance scaled by the target variance.
pub fn predict(model: &TrainedModel, x_query: &Matrix) -> Result<(Vec<f64>, Vec<f64>), TrainerError> {
    let x_std = Matrix::from_fn(x_query.rows(), x_query.cols(), |i, j| {
        if model.x_std[j] > 0.0 {
            (x_query.get(i, j) - model.x_mean[j]) / model.x_std[j]
        } else {
            0.0
        }
    });
    let (mean_std, var_std) = predict_standardized(
        &model.mlp,
        &model.kp,
        model.coord_cols,
        &model.labeled_x,
        &model.labeled_y,
        &x_std,
        &model.jitter,
    )?;
    let mean = mean_std
        .iter()
        .map(|&z| model.y_mean + model.y_std * z)
        .collect();
    let var = var_std
        .iter()
        .map(|&v| model.y_std * model.y_std * v)
        .collect();
    Ok((mean, var))
}

/// Per-coordinate comparison of an analytic gradient against central
/// finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    /// Coordinates whose relative error exceeded the tolerance.
    pub failures: Vec<(usize, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks the analytic gradient of `f` at `params` against central
/// differences with step `h`. `f` returns the loss and its full gradient;
/// only the loss of the perturbed evaluations is used.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    params: &[f64],
    h: f64,
    tol: f64,
) -> GradCheckReport {
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient length mismatch");
    let mut work = params.to_vec();
    let mut max_rel = 0.0_f64;
    let mut worst = 0;
    let mut failures = Vec::new();
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + h;
        let (lp, _) = f(&work);
        work[i] = orig - h;
        let (lm, _) = f(&work);
        work[i] = orig;
        let fd = (lp - lm) / (2.0 * h);
        let denom = (fd.abs() + analytic[i].abs()).max(1e-6);
        let rel = (fd - analytic[i]).abs() / denom;
        if !(rel <= tol) {
            failures.push((i, rel));
        }
        if rel > max_rel || rel.is_nan() {
            max_rel = rel;
            worst = i;
        }
    }
    GradCheckReport { checked: params.len(), max_rel_err: max_rel, worst_index: worst, failures }
}

/// The compound objective as a closure over the flat parameter vector
/// `[mlp | kernel]` — the harness feeds this to [`grad_check`].
pub fn semisup_objective<'a>(
    mlp0: &'a MlpParams,
    kp0: &'a KernelParams,
    coord_cols: usize,
    x_l: &'a Matrix,
    y_l: &'a [f64],
    x_u: &'a Matrix,
    alpha: f64,
    policy: &'a JitterPolicy,
) -> impl FnMut(&[f64]) -> (f64, Vec<f64>) + 'a {
    let n_net = mlp0.param_count();
    move |flat: &[f64]| {
        let mut mlp = mlp0.clone();
        mlp.assign_from_flat(&flat[..n_net]).expect("net params");
        let mut kp = kp0.clone();
        kp.assign_from_flat(&flat[n_net..]);
        match semisup_loss(&mlp, &kp, coord_cols, x_l, y_l, x_u, alpha, policy) {
            Ok(eval) => {
                let mut g = eval.d_mlp.flatten();
                g.extend_from_slice(&eval.d_kernel);
                (eval.loss, g)
            }
            Err(_) => (f64::NAN, vec![f64::NAN; flat.len()]),
        }
    }
}
