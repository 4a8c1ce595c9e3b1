//! Mean teacher for regression. The student trains on squared error plus
//! a consistency penalty toward a teacher whose parameters are the
//! exponential moving average of the student's over optimizer steps; the
//! two consistency branches see independently noised inputs. Predictions
//! come from the teacher.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::rmse;
use crate::linalg::Matrix;
use crate::net::{adam_step, mlp_backward, mlp_forward, AdamState, MlpParams};

use super::BaselineError;

#[derive(Debug, Clone)]
pub struct MeanTeacherConfig {
    /// EMA coefficient β: `teacher ← β·teacher + (1−β)·student`.
    pub ema_decay: f64,
    pub consistency_weight: f64,
    /// Std of the Gaussian input noise applied independently to the two
    /// consistency branches.
    pub noise_std: f64,
}

impl Default for MeanTeacherConfig {
    fn default() -> Self {
        Self { ema_decay: 0.99, consistency_weight: 1.0, noise_std: 0.1 }
    }
}

/// Student/teacher pair with the optimizer state; [`step`](Self::step)
/// advances both. The teacher starts as an exact copy of the student.
#[derive(Debug, Clone)]
pub struct MeanTeacherTrainer {
    pub student: MlpParams,
    pub teacher: MlpParams,
    pub config: MeanTeacherConfig,
    adam: AdamState,
}

impl MeanTeacherTrainer {
    pub fn new(
        student: MlpParams,
        config: MeanTeacherConfig,
        lr: f64,
        weight_decay: f64,
    ) -> Result<Self, BaselineError> {
        if student.output_dim() != 1 {
            return Err(BaselineError::NotScalarOutput { got: student.output_dim() });
        }
        let adam = AdamState::new(student.param_count(), lr, weight_decay);
        Ok(Self { teacher: student.clone(), student, config, adam })
    }

    /// One optimizer step on `MSE(labeled) + w·mean (student(x+η₁) −
    /// teacher(x+η₂))²` over the mixed batch, then the teacher EMA
    /// update. Returns the loss. With zero consistency weight the
    /// consistency branch is skipped entirely (no noise is drawn), so the
    /// student trajectory is exactly plain MSE training.
    pub fn step<R: Rng>(
        &mut self,
        x_l: &Matrix,
        y_l: &[f64],
        x_mix: &Matrix,
        rng: &mut R,
    ) -> Result<f64, BaselineError> {
        let n = x_l.rows();
        if n == 0 {
            return Err(BaselineError::EmptyTrainingSet);
        }
        if y_l.len() != n {
            return Err(BaselineError::LengthMismatch { left: n, right: y_l.len() });
        }

        let (h, cache) = mlp_forward(&self.student, x_l)?;
        let mut loss = 0.0;
        let d_h = Matrix::from_fn(n, 1, |i, _| {
            let e = h.get(i, 0) - y_l[i];
            loss += e * e / n as f64;
            2.0 * e / n as f64
        });
        let (mut grads, _) = mlp_backward(&self.student, &cache, &d_h)?;

        let w = self.config.consistency_weight;
        if w != 0.0 && x_mix.rows() > 0 {
            let m = x_mix.rows();
            let noised = |rng: &mut R| -> Matrix {
                if self.config.noise_std == 0.0 {
                    x_mix.clone()
                } else {
                    Matrix::from_fn(m, x_mix.cols(), |i, j| {
                        let eta: f64 = StandardNormal.sample(rng);
                        x_mix.get(i, j) + self.config.noise_std * eta
                    })
                }
            };
            let x1 = noised(rng);
            let x2 = noised(rng);
            let (s, cache_s) = mlp_forward(&self.student, &x1)?;
            let (t, _) = mlp_forward(&self.teacher, &x2)?;
            let mut cons = 0.0;
            let d_s = Matrix::from_fn(m, 1, |i, _| {
                let diff = s.get(i, 0) - t.get(i, 0);
                cons += diff * diff / m as f64;
                2.0 * w * diff / m as f64
            });
            loss += w * cons;
            let (g_cons, _) = mlp_backward(&self.student, &cache_s, &d_s)?;
            grads.add_assign(&g_cons);
        }

        let mut flat = self.student.flatten();
        adam_step(&mut self.adam, &mut flat, &grads.flatten())?;
        self.student.assign_from_flat(&flat)?;

        // EMA over optimizer steps
        let beta = self.config.ema_decay;
        let s_flat = self.student.flatten();
        let mut t_flat = self.teacher.flatten();
        for (t, s) in t_flat.iter_mut().zip(&s_flat) {
            *t = beta * *t + (1.0 - beta) * s;
        }
        self.teacher.assign_from_flat(&t_flat)?;

        Ok(loss)
    }
}

#[derive(Debug, Clone)]
pub struct MeanTeacherTrainConfig {
    pub mt: MeanTeacherConfig,
    pub hidden_layers: Vec<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub unlabeled_batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for MeanTeacherTrainConfig {
    fn default() -> Self {
        Self {
            mt: MeanTeacherConfig::default(),
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
pub struct MeanTeacherModel {
    pub student: MlpParams,
    pub teacher: MlpParams,
    pub best_val_rmse: f64,
    pub best_epoch: usize,
}

impl MeanTeacherModel {
    /// Predictions use the teacher.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, BaselineError> {
        let (h, _) = mlp_forward(&self.teacher, x)?;
        Ok(h.col_to_vec(0))
    }
}

/// Mini-batch mean-teacher training with validation early stopping (on
/// teacher predictions), in the caller's (standardized) units. Each step
/// mixes the full labeled block with one unlabeled batch.
pub fn mean_teacher_train(
    config: &MeanTeacherTrainConfig,
    x_l: &Matrix,
    y_l: &[f64],
    x_u: &Matrix,
    x_val: &Matrix,
    y_val: &[f64],
) -> Result<MeanTeacherModel, BaselineError> {
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
    let student = MlpParams::init(&sizes, &mut rng);
    let mut trainer = MeanTeacherTrainer::new(student, config.mt.clone(), config.lr, config.weight_decay)?;

    let m = x_u.rows();
    let batch = config.unlabeled_batch.max(1);
    let mut order: Vec<usize> = (0..m).collect();

    let mut best_student = trainer.student.clone();
    let mut best_teacher = trainer.teacher.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        if m == 0 {
            let loss = trainer.step(x_l, y_l, x_l, &mut rng)?;
            if !loss.is_finite() {
                return Err(BaselineError::Diverged { epoch });
            }
        } else {
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            for chunk in order.chunks(batch) {
                let xb = Matrix::from_fn(chunk.len(), d, |i, j| x_u.get(chunk[i], j));
                let mix = x_l.vstack(&xb);
                let loss = trainer.step(x_l, y_l, &mix, &mut rng)?;
                if !loss.is_finite() {
                    return Err(BaselineError::Diverged { epoch });
                }
            }
        }

        let (pred, _) = mlp_forward(&trainer.teacher, x_val)?;
        let val_rmse = rmse(&pred.col_to_vec(0), y_val)?;
        if val_rmse < best_val {
            best_val = val_rmse;
            best_epoch = epoch;
            best_student = trainer.student.clone();
            best_teacher = trainer.teacher.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    Ok(MeanTeacherModel {
        student: best_student,
        teacher: best_teacher,
        best_val_rmse: best_val,
        best_epoch,
    })
}
