//! Co-training regressors: two kNN learners with different Minkowski
//! orders. Each round both learners pseudo-label candidates from a shared
//! pool and score them by the drop in their own labeled-set leave-one-out
//! error; each best improving candidate migrates to the *other* learner's
//! training set. Rounds are simultaneous (both selections read the same
//! pre-round state), so swapping the two metric orders mirrors the
//! learners exactly. A migration is accepted only when it does not raise
//! the recipient's leave-one-out error, which keeps both learners' errors
//! monotonically non-increasing across accepted rounds.

use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::Matrix;

use super::knn::{knn_predict, minkowski_distance};
use super::BaselineError;

#[derive(Debug, Clone)]
pub struct CoregConfig {
    pub k: usize,
    /// Minkowski orders of the two learners; distinct orders give the
    /// committee its diversity.
    pub metric_orders: (f64, f64),
    /// Candidates scored per round, drawn without replacement from the
    /// unlabeled set and refilled as points migrate.
    pub pool_size: usize,
    pub max_rounds: usize,
}

impl Default for CoregConfig {
    fn default() -> Self {
        Self { k: 3, metric_orders: (2.0, 5.0), pool_size: 100, max_rounds: 100 }
    }
}

/// Leave-one-out kNN error over the eval rows, trained on all rows but
/// the held-out one, optionally with one extra pseudo-labeled point.
fn loo_error_rows(
    rows: &[Vec<f64>],
    ys: &[f64],
    n_eval: usize,
    k: usize,
    order: f64,
    extra: Option<(&[f64], f64)>,
) -> f64 {
    let mut sum = 0.0;
    for i in 0..n_eval {
        let mut scored: Vec<(f64, usize, f64)> = Vec::with_capacity(rows.len());
        for (j, row) in rows.iter().enumerate() {
            if j == i {
                continue;
            }
            scored.push((minkowski_distance(row, &rows[i], order), j, ys[j]));
        }
        if let Some((xe, ye)) = extra {
            scored.push((minkowski_distance(xe, &rows[i], order), rows.len(), ye));
        }
        scored.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let kk = k.min(scored.len());
        let pred = scored[..kk].iter().map(|s| s.2).sum::<f64>() / kk as f64;
        let e = pred - ys[i];
        sum += e * e;
    }
    sum / n_eval as f64
}

/// Mean squared leave-one-out kNN error over all given points.
pub fn labeled_loo_error(x: &Matrix, y: &[f64], k: usize, order: f64) -> f64 {
    let rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
    loo_error_rows(&rows, y, rows.len(), k, order, None)
}

#[derive(Debug, Clone)]
struct Learner {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    n_original: usize,
    k: usize,
    order: f64,
}

impl Learner {
    fn predict(&self, q: &[f64]) -> f64 {
        let mut scored: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(j, row)| (minkowski_distance(row, q, self.order), j))
            .collect();
        scored.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let k = self.k.min(scored.len());
        scored[..k].iter().map(|&(_, j)| self.y[j]).sum::<f64>() / k as f64
    }

    fn loo(&self, extra: Option<(&[f64], f64)>) -> f64 {
        loo_error_rows(&self.x, &self.y, self.n_original, self.k, self.order, extra)
    }
}

/// Committee of the two trained learners; predictions average them.
#[derive(Debug, Clone)]
pub struct CoregModel {
    learners: [LearnerView; 2],
}

#[derive(Debug, Clone)]
pub struct LearnerView {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub k: usize,
    pub order: f64,
}

impl CoregModel {
    pub fn predict(&self, q: &[f64]) -> Result<f64, BaselineError> {
        let mut sum = 0.0;
        for l in &self.learners {
            let k = l.k.min(l.x.rows());
            sum += knn_predict(&l.x, &l.y, q, k, l.order)?;
        }
        Ok(sum / 2.0)
    }

    pub fn learner(&self, i: usize) -> &LearnerView {
        &self.learners[i]
    }
}

/// One accepted migration: which learner received a point and its
/// leave-one-out error before and after.
#[derive(Debug, Clone, PartialEq)]
pub struct CoregRound {
    pub round: usize,
    pub recipient: usize,
    pub loo_before: f64,
    pub loo_after: f64,
}

/// Best pool candidate for a donor: the one whose addition to the donor's
/// own set most reduces its leave-one-out error. `skip` excludes a pool
/// slot already claimed by the other donor.
fn select_candidate(
    learner: &Learner,
    pool: &[usize],
    unlabeled_x: &Matrix,
    base_loo: f64,
    skip: Option<usize>,
) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (slot, &u) in pool.iter().enumerate() {
        if skip == Some(slot) {
            continue;
        }
        let q = unlabeled_x.row(u);
        let pseudo = learner.predict(q);
        let delta = base_loo - learner.loo(Some((q, pseudo)));
        if delta > 0.0 && best.map(|(_, d, _)| delta > d).unwrap_or(true) {
            best = Some((slot, delta, pseudo));
        }
    }
    best
}

/// Runs co-training and returns the committee plus the log of accepted
/// migrations. With an empty pool this degenerates to two plain kNN
/// regressors.
pub fn coreg_train<R: Rng>(
    config: &CoregConfig,
    labeled_x: &Matrix,
    labeled_y: &[f64],
    unlabeled_x: &Matrix,
    rng: &mut R,
) -> Result<(CoregModel, Vec<CoregRound>), BaselineError> {
    let n = labeled_x.rows();
    if n == 0 {
        return Err(BaselineError::EmptyTrainingSet);
    }
    if labeled_y.len() != n {
        return Err(BaselineError::LengthMismatch { left: n, right: labeled_y.len() });
    }

    let rows: Vec<Vec<f64>> = (0..n).map(|i| labeled_x.row(i).to_vec()).collect();
    let mut learners = [
        Learner {
            x: rows.clone(),
            y: labeled_y.to_vec(),
            n_original: n,
            k: config.k,
            order: config.metric_orders.0,
        },
        Learner {
            x: rows,
            y: labeled_y.to_vec(),
            n_original: n,
            k: config.k,
            order: config.metric_orders.1,
        },
    ];

    // shuffled unlabeled queue; the leading pool_size entries are live
    let mut queue: Vec<usize> = (0..unlabeled_x.rows()).collect();
    for i in (1..queue.len()).rev() {
        let j = rng.gen_range(0..=i);
        queue.swap(i, j);
    }
    let mut pool: Vec<usize> = Vec::new();
    let mut next = 0;
    while pool.len() < config.pool_size && next < queue.len() {
        pool.push(queue[next]);
        next += 1;
    }

    let mut loo = [learners[0].loo(None), learners[1].loo(None)];
    let mut log = Vec::new();

    for round in 0..config.max_rounds {
        // both donors score the same pre-round pool
        let mut picks = [
            select_candidate(&learners[0], &pool, unlabeled_x, loo[0], None),
            select_candidate(&learners[1], &pool, unlabeled_x, loo[1], None),
        ];
        if let (Some(a), Some(b)) = (picks[0], picks[1]) {
            if a.0 == b.0 {
                // same candidate: larger improvement wins, the loser
                // re-selects; exact ties go to the smaller metric order
                let zero_wins = a.1 > b.1
                    || (a.1 == b.1 && config.metric_orders.0 <= config.metric_orders.1);
                let loser = usize::from(zero_wins);
                picks[loser] = select_candidate(
                    &learners[loser],
                    &pool,
                    unlabeled_x,
                    loo[loser],
                    Some(a.0),
                );
            }
        }

        // gate against the pre-round recipient state, then apply
        let mut accepted: Vec<(usize, usize, f64, f64)> = Vec::new();
        for donor in 0..2 {
            if let Some((slot, _, pseudo)) = picks[donor] {
                let recipient = 1 - donor;
                let q = unlabeled_x.row(pool[slot]);
                let after = learners[recipient].loo(Some((q, pseudo)));
                if after <= loo[recipient] {
                    accepted.push((recipient, slot, pseudo, after));
                }
            }
        }
        if accepted.is_empty() {
            break;
        }
        let mut used_slots: Vec<usize> = Vec::new();
        for &(recipient, slot, pseudo, after) in &accepted {
            let u = pool[slot];
            learners[recipient].x.push(unlabeled_x.row(u).to_vec());
            learners[recipient].y.push(pseudo);
            log.push(CoregRound { round, recipient, loo_before: loo[recipient], loo_after: after });
            loo[recipient] = after;
            used_slots.push(slot);
        }
        used_slots.sort_unstable_by(|a, b| b.cmp(a));
        for slot in used_slots {
            pool.remove(slot);
            if next < queue.len() {
                pool.push(queue[next]);
                next += 1;
            }
        }
    }

    let views = learners.map(|l| LearnerView {
        x: Matrix::from_fn(l.x.len(), l.x[0].len(), |i, j| l.x[i][j]),
        y: l.y,
        k: l.k,
        order: l.order,
    });
    Ok((CoregModel { learners: views }, log))
}
