//! Positive-positive terms shared by the reference and bucketed losses:
//! `rank⁺` and, for Rank&Sort, the sorting errors and their update signals.
//! Bucketing leaves these untouched, so both implementations use this code.

use crate::model::StepFn;

pub(crate) struct SortingTerms {
    /// `rank⁺` per positive, accumulated alongside the sorting errors.
    pub rank_plus: Vec<f64>,
    /// Current sorting error per positive.
    pub current: Vec<f64>,
    /// Target sorting error per positive.
    pub target: Vec<f64>,
    /// Unnormalised promote + demote update per positive.
    pub grads: Vec<f64>,
}

/// `rank⁺(i) = 1 + sum_{j != i} H(s_j - s_i)` for every positive.
pub(crate) fn rank_plus<S: StepFn>(h: S, scores: &[f64], diff_ops: &mut u64) -> Vec<f64> {
    let p = scores.len();
    let mut out = Vec::with_capacity(p);
    let mut part = [0.0f64; 2];
    for (i, &si) in scores.iter().enumerate() {
        crate::kernel::step_row_sums(h, &scores[..i], &[si], &mut part[..1]);
        crate::kernel::step_row_sums(h, &scores[i + 1..], &[si], &mut part[1..]);
        out.push(1.0 + (part[0] + part[1]));
    }
    *diff_ops += (p * p) as u64;
    out
}

/// Sorting errors and the promote/demote signals over positives.
///
/// `ious` is aligned with `scores`. The detection itself enters every sum
/// with weight 1. The sorting pmf uses a strict `IoU_j < IoU_i`, the target
/// error a non-strict `IoU_j >= IoU_i`. When the pmf has no mass the demote
/// term is dropped; in that case current and target errors are accumulated
/// identically and cancel exactly.
pub(crate) fn sorting_terms<S: StepFn>(
    h: S,
    scores: &[f64],
    ious: &[f64],
    diff_ops: &mut u64,
) -> SortingTerms {
    let p = scores.len();
    let mut rank_plus = Vec::with_capacity(p);
    let mut current = Vec::with_capacity(p);
    let mut target = Vec::with_capacity(p);
    let mut grads = vec![0.0; p];

    for i in 0..p {
        let (si, iou_i) = (scores[i], ious[i]);
        let wi = 1.0 - iou_i;
        let (mut cur_num, mut cur_den) = (wi, 1.0);
        let (mut tgt_num, mut tgt_den) = (wi, 1.0);
        let mut mass = 0.0;
        for j in (0..p).filter(|&j| j != i) {
            let hij = h.h(scores[j] - si);
            let wj = 1.0 - ious[j];
            cur_num += hij * wj;
            cur_den += hij;
            if ious[j] >= iou_i {
                tgt_num += hij * wj;
                tgt_den += hij;
            } else {
                mass += hij;
            }
        }
        let cur = cur_num / cur_den;
        let tgt = tgt_num / tgt_den;
        let err = cur - tgt;
        rank_plus.push(cur_den);
        current.push(cur);
        target.push(tgt);
        grads[i] -= err;

        if mass > 0.0 && err != 0.0 {
            let c = err / mass;
            for j in (0..p).filter(|&j| j != i && ious[j] < iou_i) {
                grads[j] += c * h.h(scores[j] - si);
            }
        }
    }
    *diff_ops += (p * p) as u64;

    SortingTerms {
        rank_plus,
        current,
        target,
        grads,
    }
}
