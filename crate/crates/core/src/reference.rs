//! Unbucketed AP and Rank&Sort losses with Identity Update gradients,
//! computed by looping over the positives.
//!
//! Each positive `i` contributes one row of difference transforms
//! `x_ij = s_j - s_i` against all positives and the retained negatives. Its
//! ranking error `N_FP(i) / rank(i)` is pushed to the negatives through the
//! uniform ranking pmf `H(x_ij) / N_FP(i)`, and the Rank&Sort sorting error
//! through the sorting pmf over lower-IoU positives. Gradients are divided
//! by `|P|` at the end.

use crate::bucketed::OpCounters;
use crate::kernel::{step_row_scatter, step_row_sums, BLOCK_ROWS};
use crate::model::{with_step, DetectionSet, GradResult, StepFn};
use crate::positives::{rank_plus, sorting_terms};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceConfig {
    /// Keep only negatives with `s > min_{i in P} s_i - delta`.
    pub discard_trivial: bool,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            discard_trivial: true,
        }
    }
}

pub fn ap_loss_grad(set: &DetectionSet, cfg: ReferenceConfig) -> GradResult {
    ap_loss_grad_counted(set, cfg).0
}

pub fn rs_loss_grad(set: &DetectionSet, cfg: ReferenceConfig) -> GradResult {
    rs_loss_grad_counted(set, cfg).0
}

pub fn ap_loss_grad_counted(set: &DetectionSet, cfg: ReferenceConfig) -> (GradResult, OpCounters) {
    with_step!(set.step(), |h| loop_on_positives(h, set, cfg, false))
}

pub fn rs_loss_grad_counted(set: &DetectionSet, cfg: ReferenceConfig) -> (GradResult, OpCounters) {
    with_step!(set.step(), |h| loop_on_positives(h, set, cfg, true))
}

fn loop_on_positives<S: StepFn>(
    h: S,
    set: &DetectionSet,
    cfg: ReferenceConfig,
    with_sorting: bool,
) -> (GradResult, OpCounters) {
    let mut ops = OpCounters::default();
    let n = set.len();
    let scores = set.scores();
    let pos = set.positive_indices();
    ops.total_ops += n as u64;
    if pos.is_empty() {
        return (GradResult::zero(n), ops.finish());
    }

    let pos_scores: Vec<f64> = pos.iter().map(|&i| scores[i]).collect();
    let s_min = pos_scores.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = s_min - set.delta();
    let neg: Vec<usize> = (0..n)
        .filter(|&i| !set.is_positive(i) && (!cfg.discard_trivial || scores[i] > floor))
        .collect();
    let neg_scores: Vec<f64> = neg.iter().map(|&i| scores[i]).collect();
    ops.total_ops += n as u64;

    // Positive rows: rank⁺ and, for RS, the sorting errors.
    let (rank_plus, sorting) = if with_sorting {
        let ious: Vec<f64> = pos.iter().map(|&i| set.iou_or_zero(i)).collect();
        let terms = sorting_terms(h, &pos_scores, &ious, &mut ops.diff_ops);
        (terms.rank_plus.clone(), Some(terms))
    } else {
        (rank_plus(h, &pos_scores, &mut ops.diff_ops), None)
    };

    // Negative rows, BLOCK_ROWS positives at a time.
    let p = pos.len();
    let mut ranking_error = vec![0.0; p];
    let mut neg_grads = vec![0.0; neg.len()];
    let mut n_fp = [0.0f64; BLOCK_ROWS];
    let mut coef = [0.0f64; BLOCK_ROWS];
    for start in (0..p).step_by(BLOCK_ROWS) {
        let end = (start + BLOCK_ROWS).min(p);
        let rows = end - start;
        let ts = &pos_scores[start..end];
        step_row_sums(h, &neg_scores, ts, &mut n_fp[..rows]);
        for r in 0..rows {
            let i = start + r;
            let err = n_fp[r] / (rank_plus[i] + n_fp[r]);
            ranking_error[i] = err;
            // N_FP = 0 forces a zero error, so the pmf is only needed when N_FP > 0.
            coef[r] = if n_fp[r] > 0.0 { err / n_fp[r] } else { 0.0 };
        }
        step_row_scatter(h, &neg_scores, ts, &coef[..rows], &mut neg_grads);
    }
    ops.diff_ops += (p * neg.len()) as u64;

    let norm = p as f64;
    let mut grads = vec![0.0; n];
    let mut ranking = 0.0;
    let mut sorting_sum = 0.0;
    for (a, &i) in pos.iter().enumerate() {
        ranking += ranking_error[a];
        let mut g = -ranking_error[a];
        if let Some(t) = &sorting {
            sorting_sum += t.current[a] - t.target[a];
            g += t.grads[a];
        }
        grads[i] = g / norm;
    }
    for (k, &i) in neg.iter().enumerate() {
        grads[i] = neg_grads[k] / norm;
    }
    ops.total_ops += n as u64;

    (
        GradResult::from_components(ranking / norm, sorting_sum / norm, grads),
        ops.finish(),
    )
}
