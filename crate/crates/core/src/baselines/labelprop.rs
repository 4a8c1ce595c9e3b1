//! Graph label propagation adapted to regression. A fully-connected
//! RBF-weighted transition matrix is built over labeled and free nodes
//! (self-loops excluded, rows normalized to be stochastic so `y ← T·y`
//! averages); free labels start from a kNN fit and the iteration clamps
//! labeled entries to their known values until the update stalls. The
//! kernel scale is picked from a grid by validation RMSE.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;


use crate::data::rmse;
use crate::linalg::Matrix;

use super::knn::knn_predict;
use super::BaselineError;

#[derive(Debug, Clone)]
pub struct LabelPropConfig {
    /// Candidate RBF scales; the validation set picks one.
    pub rbf_scale_grid: Vec<f64>,
    /// Hard cap on the number of free (non-clamped) graph nodes.
    pub max_unlabeled: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// k for the kNN label initialization.
    pub init_knn_k: usize,
}

impl Default for LabelPropConfig {
    fn default() -> Self {
        Self {
            rbf_scale_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            max_unlabeled: 20_000,
            tol: 1e-6,
            max_iters: 1000,
            init_knn_k: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabelPropOutcome {
    /// Converged (or last-iterate) labels for the unlabeled block.
    pub predictions: Vec<f64>,
    pub validation_rmse: f64,
    pub selected_scale: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl fmt::Display for LabelPropOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "scale {} ({} iterations, converged: {})",
            self.selected_scale, self.iterations, self.converged
        )
    }
}

struct PropRun {
    unlabeled: Vec<f64>,
    validation: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Propagates labels over labeled ∪ validation ∪ unlabeled nodes at one
/// scale. Validation points ride along as free nodes so their
/// predictions can score the scale choice.
fn propagate(
    config: &LabelPropConfig,
    labeled_x: &Matrix,
    labeled_y: &[f64],
    validation_x: &Matrix,
    unlabeled_x: &Matrix,
    scale: f64,
) -> Result<PropRun, BaselineError> {
    let n_l = labeled_x.rows();
    let n_v = validation_x.rows();
    let n_u = unlabeled_x.rows();
    let total = n_l + n_v + n_u;
    if n_l == 0 {
        return Err(BaselineError::EmptyTrainingSet);
    }

    let row_of = |i: usize| -> &[f64] {
        if i < n_l {
            labeled_x.row(i)
        } else if i < n_l + n_v {
            validation_x.row(i - n_l)
        } else {
            unlabeled_x.row(i - n_l - n_v)
        }
    };

    // row-stochastic transition matrix, no self-loops
    let denom = 2.0 * scale * scale;
    let mut t = Matrix::zeros(total, total);
    for i in 0..total {
        let mut sum = 0.0;
        for j in 0..total {
            if i == j {
                continue;
            }
            let mut sq = 0.0;
            for (a, b) in row_of(i).iter().zip(row_of(j)) {
                sq += (a - b) * (a - b);
            }
            let w = (-sq / denom).exp();
            t.set(i, j, w);
            sum += w;
        }
        if sum > 0.0 {
            for j in 0..total {
                t.set(i, j, t.get(i, j) / sum);
            }
        }
    }

    // initialize free nodes from a kNN fit on the labeled block
    let k = config.init_knn_k.min(n_l);
    let mut y = vec![0.0; total];
    y[..n_l].copy_from_slice(labeled_y);
    for i in n_l..total {
        y[i] = knn_predict(labeled_x, labeled_y, row_of(i), k, 2.0)?;
    }

    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=config.max_iters {
        iterations = it;
        let mut y_new = t.matvec(&y);
        // isolated rows keep their previous value
        for i in 0..total {
            if (0..total).all(|j| t.get(i, j) == 0.0) {
                y_new[i] = y[i];
            }
        }
        // clamp labeled nodes to their known values
        y_new[..n_l].copy_from_slice(labeled_y);
        let delta = y
            .iter()
            .zip(&y_new)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        y = y_new;
        if delta <= config.tol {
            converged = true;
            break;
        }
    }

    Ok(PropRun {
        validation: y[n_l..n_l + n_v].to_vec(),
        unlabeled: y[n_l + n_v..].to_vec(),
        converged,
        iterations,
    })
}

/// Runs propagation for every scale in the grid and returns the
/// predictions of the scale with the best validation RMSE. Non-converged
/// runs are reported through the flag, not an error.
pub fn label_prop(
    config: &LabelPropConfig,
    labeled_x: &Matrix,
    labeled_y: &[f64],
    unlabeled_x: &Matrix,
    validation_x: &Matrix,
    validation_y: &[f64],
) -> Result<LabelPropOutcome, BaselineError> {
    let free = unlabeled_x.rows() + validation_x.rows();
    if free > config.max_unlabeled {
        return Err(BaselineError::TooManyUnlabeled { count: free, max: config.max_unlabeled });
    }
    let mut best: Option<LabelPropOutcome> = None;
    for &scale in &config.rbf_scale_grid {
        let run = propagate(config, labeled_x, labeled_y, validation_x, unlabeled_x, scale)?;
        let val_rmse = if validation_y.is_empty() {
            0.0
        } else {
            rmse(&run.validation, validation_y)?
        };
        let better = best
            .as_ref()
            .map(|b| val_rmse < b.validation_rmse)
            .unwrap_or(true);
        if better {
            best = Some(LabelPropOutcome {
                predictions: run.unlabeled,
                validation_rmse: val_rmse,
                selected_scale: scale,
                converged: run.converged,
                iterations: run.iterations,
            });
        }
    }
    best.ok_or(BaselineError::EmptyTrainingSet)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_one_scale() -> LabelPropConfig {
        LabelPropConfig { rbf_scale_grid: vec![1.0], ..LabelPropConfig::default() }
    }

    #[test]
    fn equidistant_point_converges_to_midpoint() {
        let labeled_x = Matrix::from_rows(&[&[-1.0], &[1.0]]);
        let labeled_y = [0.0, 1.0];
        let unlabeled_x = Matrix::from_rows(&[&[0.0]]);
        let out = label_prop(
            &config_one_scale(),
            &labeled_x,
            &labeled_y,
            &unlabeled_x,
            &Matrix::zeros(0, 1),
            &[],
        )
        .unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 1000);
        assert!((out.predictions[0] - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn single_labeled_point_absorbs_everything() {
        let labeled_x = Matrix::from_rows(&[&[0.0]]);
        let labeled_y = [2.5];
        let unlabeled_x = Matrix::from_rows(&[&[1.0], &[-0.5], &[3.0]]);
        let out = label_prop(
            &config_one_scale(),
            &labeled_x,
            &labeled_y,
            &unlabeled_x,
            &Matrix::zeros(0, 1),
            &[],
        )
        .unwrap();
        for p in &out.predictions {
            assert!((p - 2.5).abs() < 1e-4, "prediction {p}");
        }
    }

    #[test]
    fn scale_grid_selects_by_validation() {
        let labeled_x = Matrix::from_fn(10, 1, |i, _| i as f64);
        let labeled_y: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let unlabeled_x = Matrix::from_fn(20, 1, |i, _| 0.25 + i as f64 * 0.45);
        let validation_x = Matrix::from_rows(&[&[2.5], &[6.5]]);
        let validation_y = [(2.5_f64 * 0.7).sin(), (6.5_f64 * 0.7).sin()];
        let cfg = LabelPropConfig {
            rbf_scale_grid: vec![0.25, 1.0, 4.0],
            ..LabelPropConfig::default()
        };
        let out = label_prop(
            &cfg,
            &labeled_x,
            &labeled_y,
            &unlabeled_x,
            &validation_x,
            &validation_y,
        )
        .unwrap();
        for &scale in &cfg.rbf_scale_grid {
            let one = LabelPropConfig { rbf_scale_grid: vec![scale], ..cfg.clone() };
            let run = label_prop(
                &one,
                &labeled_x,
                &labeled_y,
                &unlabeled_x,
                &validation_x,
                &validation_y,
            )
            .unwrap();
            assert!(out.validation_rmse <= run.validation_rmse + 1e-15);
        }
    }

    #[test]
    fn rejects_oversized_unlabeled_block() {
        let cfg = LabelPropConfig { max_unlabeled: 2, ..config_one_scale() };
        let labeled_x = Matrix::from_rows(&[&[0.0]]);
        let unlabeled_x = Matrix::from_fn(3, 1, |i, _| i as f64);
        assert!(matches!(
            label_prop(&cfg, &labeled_x, &[1.0], &unlabeled_x, &Matrix::zeros(0, 1), &[]),
            Err(BaselineError::TooManyUnlabeled { .. })
        ));
    }

    #[test]
    fn contraction_after_first_iteration() {
        // per-iteration max-abs change never grows on random instances
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let labeled_x = Matrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0));
            let labeled_y: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let unlabeled_x = Matrix::from_fn(6, 2, |_, _| rng.gen_range(-1.0..1.0));

            // re-run the iteration manually to observe the deltas
            let n_l = 4;
            let total = 10;
            let all = labeled_x.clone();
            let row_of = |i: usize| -> Vec<f64> {
                if i < n_l {
                    all.row(i).to_vec()
                } else {
                    unlabeled_x.row(i - n_l).to_vec()
                }
            };
            let mut t = Matrix::zeros(total, total);
            for i in 0..total {
                let mut sum = 0.0;
                for j in 0..total {
                    if i != j {
                        let a = row_of(i);
                        let b = row_of(j);
                        let sq: f64 =
                            a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
                        let w = (-sq / 2.0).exp();
                        t.set(i, j, w);
                        sum += w;
                    }
                }
                for j in 0..total {
                    t.set(i, j, t.get(i, j) / sum);
                }
            }
            let mut y = vec![0.0; total];
            y[..n_l].copy_from_slice(&labeled_y);
            let mut last_delta = f64::INFINITY;
            for it in 0..50 {
                let mut y_new = t.matvec(&y);
                y_new[..n_l].copy_from_slice(&labeled_y);
                let delta = y
                    .iter()
                    .zip(&y_new)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                y = y_new;
                if it > 0 {
                    assert!(delta <= last_delta + 1e-12, "delta grew: {delta} > {last_delta}");
                }
                last_delta = delta;
            }
        }
    }
}
