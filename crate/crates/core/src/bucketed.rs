//! Bucketed AP and Bucketed Rank&Sort losses.
//!
//! Negatives are grouped into the `|P| + 1` runs separating consecutive
//! positives in score order. Each non-empty run is represented by its mean
//! logit (the prototype) and its size. A positive's false-positive count
//! becomes `sum_j b_j H(s^b_j - s_i)` over prototypes, its ranking error is
//! spread with the weighted pmf `b_j H(s^b_j - s_i) / N_FP(i)`, and every
//! member of bucket `j` receives the prototype gradient divided by `b_j`.
//!
//! Positives and prototypes form one score-sorted sequence, so for a given
//! positive the pairs with `H = 1` and `H = 0` are contiguous runs found by
//! binary search. Only the pairs inside the smoothing window are evaluated
//! one by one; the saturated runs are taken from prefix sums. With
//! `delta = 0` and no ties the window holds the positive alone.
//!
//! Rank&Sort's sorting terms involve positives only and are computed exactly
//! as in the reference implementation.

use serde::{Deserialize, Serialize};

use crate::model::{with_step, DetectionSet, GradResult, StepFn};
use crate::positives::sorting_terms;

/// Operation counts gathered during one loss evaluation.
///
/// `diff_ops` counts the difference transforms needed to form the errors,
/// one per pair; passes that revisit the same pairs to distribute gradients
/// are not counted again. Binary-search steps over the sorted scores count
/// as `sort_ops`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    /// Difference transforms `x_ij` (or `x^b_ij`) evaluated.
    pub diff_ops: u64,
    /// Score comparisons made while ordering and bucketing.
    pub sort_ops: u64,
    /// `diff_ops + sort_ops` plus element visits of linear passes.
    pub total_ops: u64,
}

impl OpCounters {
    /// Folds the diff and sort counts into `total_ops`, which until now held
    /// only the linear-pass visits.
    pub(crate) fn finish(mut self) -> Self {
        self.total_ops += self.diff_ops + self.sort_ops;
        self
    }
}

/// Difference transforms made by the loop-on-positives reference with `p`
/// positives and `n_hat` retained negatives.
pub fn count_reference_ops(p: u64, n_hat: u64) -> u64 {
    p * (p + n_hat)
}

/// Upper bound on the bucketed difference transforms for `p` positives:
/// positives against positives and at most `p + 1` prototypes, plus the
/// positive-positive sorting rows.
pub fn bucketed_ops_bound(p: u64) -> u64 {
    p * (2 * p + 1) + p * p
}

pub fn bap_loss_grad(set: &DetectionSet) -> (GradResult, OpCounters) {
    with_step!(set.step(), |h| bucketed(h, set, false))
}

pub fn brs_loss_grad(set: &DetectionSet) -> (GradResult, OpCounters) {
    with_step!(set.step(), |h| bucketed(h, set, true))
}

/// Score-sorted positives and the prototype sequence interleaved with them.
struct Buckets {
    /// Input indices of the positives, descending score.
    pos: Vec<usize>,
    /// Their scores.
    pos_scores: Vec<f64>,
    /// Bucket index (number of positives scoring at or above) per input
    /// index; unused for positives.
    bucket_of: Vec<u32>,
    /// Non-empty buckets, in descending prototype order.
    protos: Vec<Prototype>,
    /// Bucket index to position in `protos`.
    proto_slot: Vec<u32>,
}

struct Prototype {
    score: f64,
    size: usize,
}

fn build_buckets(set: &DetectionSet, ops: &mut OpCounters) -> Buckets {
    let scores = set.scores();
    let n = set.len();

    let mut pos = set.positive_indices();
    pos.sort_by(|&a, &b| {
        ops.sort_ops += 1;
        scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
    });
    let pos_scores: Vec<f64> = pos.iter().map(|&i| scores[i]).collect();
    let p = pos.len();

    let mut bucket_of = vec![u32::MAX; n];
    let mut sum = vec![0.0f64; p + 1];
    let mut size = vec![0usize; p + 1];
    let mut lo = vec![f64::INFINITY; p + 1];
    let mut hi = vec![f64::NEG_INFINITY; p + 1];
    let mut comparisons = 0u64;
    for (k, (&s, label)) in scores.iter().zip(set.labels()).enumerate() {
        if label.is_positive() {
            continue;
        }
        // Ties go to the positive, so the negative lands below it.
        let j = pos_scores.partition_point(|&q| {
            comparisons += 1;
            q >= s
        });
        bucket_of[k] = j as u32;
        sum[j] += s;
        size[j] += 1;
        lo[j] = lo[j].min(s);
        hi[j] = hi[j].max(s);
    }
    ops.sort_ops += comparisons;
    ops.total_ops += n as u64;

    let mut protos = Vec::new();
    let mut proto_slot = vec![u32::MAX; p + 1];
    for j in 0..=p {
        if size[j] > 0 {
            proto_slot[j] = protos.len() as u32;
            protos.push(Prototype {
                score: (sum[j] / size[j] as f64).clamp(lo[j], hi[j]),
                size: size[j],
            });
        }
    }

    Buckets {
        pos,
        pos_scores,
        bucket_of,
        protos,
        proto_slot,
    }
}

/// For `values` sorted descending, returns `(one_end, nonzero_end)` such that
/// `H(values[c] - t)` is 1 before `one_end`, strictly between 0 and 1 up to
/// `nonzero_end` and 0 after.
fn window_range<S: StepFn>(h: S, values: &[f64], t: f64, ops: &mut u64) -> (usize, usize) {
    let one_end = values.partition_point(|&v| {
        *ops += 1;
        h.h(v - t) >= 1.0
    });
    let nonzero_end = one_end
        + values[one_end..].partition_point(|&v| {
            *ops += 1;
            h.h(v - t) > 0.0
        });
    (one_end, nonzero_end)
}

fn bucketed<S: StepFn>(h: S, set: &DetectionSet, with_sorting: bool) -> (GradResult, OpCounters) {
    let mut ops = OpCounters::default();
    let n = set.len();
    let p = set.num_positives();
    if p == 0 {
        ops.total_ops += n as u64;
        return (GradResult::zero(n), ops.finish());
    }

    let b = build_buckets(set, &mut ops);
    let q = &b.pos_scores;
    let proto_scores: Vec<f64> = b.protos.iter().map(|pr| pr.score).collect();
    let mut mass_prefix = Vec::with_capacity(b.protos.len() + 1);
    mass_prefix.push(0.0f64);
    for pr in &b.protos {
        mass_prefix.push(mass_prefix.last().unwrap() + pr.size as f64);
    }

    // Bucketed ranking error per positive (sorted order).
    let mut ranking_error = vec![0.0; p];
    let mut weight = vec![0.0; p];
    for a in 0..p {
        let s = q[a];

        let (one_end, nz_end) = window_range(h, q, s, &mut ops.sort_ops);
        let mut rank_plus = 1.0 + one_end as f64;
        for c in (one_end..nz_end).filter(|&c| c != a) {
            rank_plus += h.h(q[c] - s);
        }
        ops.diff_ops += (nz_end - one_end) as u64;

        let (one_end, nz_end) = window_range(h, &proto_scores, s, &mut ops.sort_ops);
        let mut n_fp = mass_prefix[one_end];
        for (pr, &v) in b.protos[one_end..nz_end]
            .iter()
            .zip(&proto_scores[one_end..nz_end])
        {
            n_fp += pr.size as f64 * h.h(v - s);
        }
        ops.diff_ops += (nz_end - one_end) as u64;

        let err = n_fp / (rank_plus + n_fp);
        ranking_error[a] = err;
        weight[a] = if n_fp > 0.0 { err / n_fp } else { 0.0 };
    }

    // Sum of weights from the lowest positive upwards.
    let mut weight_suffix = vec![0.0f64; p + 1];
    for a in (0..p).rev() {
        weight_suffix[a] = weight_suffix[a + 1] + weight[a];
    }

    // Prototype gradients, then spread over bucket members. The window pairs
    // here are the ones already counted above.
    let mut member_grad = Vec::with_capacity(b.protos.len());
    for pr in &b.protos {
        let v = pr.score;
        // Along descending q the step H(v - q_a) is non-decreasing.
        let zero_end = q.partition_point(|&qa| {
            ops.sort_ops += 1;
            h.h(v - qa) <= 0.0
        });
        let below_one_end = zero_end
            + q[zero_end..].partition_point(|&qa| {
                ops.sort_ops += 1;
                h.h(v - qa) < 1.0
            });
        let mut acc = weight_suffix[below_one_end];
        for a in zero_end..below_one_end {
            acc += weight[a] * h.h(v - q[a]);
        }
        ops.total_ops += (below_one_end - zero_end) as u64;
        let size = pr.size as f64;
        let proto_grad = size * acc;
        member_grad.push(proto_grad / size);
    }

    let sorting = with_sorting.then(|| {
        // Input order, matching the reference implementation.
        let mut by_input = b.pos.clone();
        by_input.sort_unstable();
        let scores: Vec<f64> = by_input.iter().map(|&i| set.scores()[i]).collect();
        let ious: Vec<f64> = by_input.iter().map(|&i| set.iou_or_zero(i)).collect();
        (
            by_input,
            sorting_terms(h, &scores, &ious, &mut ops.diff_ops),
        )
    });

    let norm = p as f64;
    let mut grads = vec![0.0; n];
    let mut pos_error = vec![0.0; n];
    for (a, &i) in b.pos.iter().enumerate() {
        pos_error[i] = ranking_error[a];
        grads[i] = -ranking_error[a];
    }
    let mut sorting_sum = 0.0;
    if let Some((by_input, t)) = &sorting {
        for (k, &i) in by_input.iter().enumerate() {
            sorting_sum += t.current[k] - t.target[k];
            grads[i] += t.grads[k];
        }
    }
    let mut ranking = 0.0;
    for i in 0..n {
        if set.is_positive(i) {
            ranking += pos_error[i];
            grads[i] /= norm;
        } else {
            let slot = b.proto_slot[b.bucket_of[i] as usize] as usize;
            grads[i] = member_grad[slot] / norm;
        }
    }
    ops.total_ops += 2 * n as u64;

    (
        GradResult::from_components(ranking / norm, sorting_sum / norm, grads),
        ops.finish(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{ap_loss_grad, rs_loss_grad, ReferenceConfig};

    fn e1(delta: f64) -> DetectionSet {
        DetectionSet::from_pairs(
            &[
                (3.0, None),
                (2.5, None),
                (2.0, Some(0.9)),
                (1.0, None),
                (0.5, Some(0.6)),
                (0.0, None),
            ],
            delta,
        )
        .unwrap()
    }

    #[test]
    fn bap_hand_example() {
        let (r, _) = bap_loss_grad(&e1(0.0));
        assert!((r.loss - 19.0 / 30.0).abs() <= 1e-12);
        let want = [4.0 / 15.0, 4.0 / 15.0, -1.0 / 3.0, 0.1, -0.3, 0.0];
        for (g, w) in r.grads.iter().zip(want) {
            assert!((g - w).abs() <= 1e-12, "{:?}", r.grads);
        }
    }

    #[test]
    fn brs_positives_only() {
        let set = DetectionSet::from_pairs(&[(2.0, Some(0.6)), (0.5, Some(0.9))], 0.0).unwrap();
        let (r, _) = brs_loss_grad(&set);
        assert!((r.loss - 0.075).abs() <= 1e-12);
        assert!((r.grads[0] - 0.075).abs() <= 1e-12);
        assert!((r.grads[1] + 0.075).abs() <= 1e-12);
        assert_eq!(r, rs_loss_grad(&set, ReferenceConfig::default()));
    }

    #[test]
    fn brs_matches_rs_on_hand_example() {
        let set = e1(0.0);
        let (b, _) = brs_loss_grad(&set);
        let r = rs_loss_grad(&set, ReferenceConfig::default());
        assert!((b.loss - r.loss).abs() <= 1e-12);
        for (x, y) in b.grads.iter().zip(&r.grads) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn size_one_buckets_match_reference_at_any_delta() {
        let set = DetectionSet::from_pairs(
            &[
                (1.2, None),
                (1.0, Some(0.3)),
                (0.9, None),
                (0.7, Some(0.8)),
                (0.55, None),
                (0.4, Some(0.5)),
            ],
            0.5,
        )
        .unwrap();
        let (b, _) = bap_loss_grad(&set);
        let r = ap_loss_grad(&set, ReferenceConfig::default());
        assert!((b.loss - r.loss).abs() <= 1e-12);
        for (x, y) in b.grads.iter().zip(&r.grads) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn perfect_ranking_and_no_positives() {
        let set =
            DetectionSet::from_pairs(&[(3.0, Some(0.5)), (1.0, None), (0.0, None)], 0.5).unwrap();
        let (r, _) = bap_loss_grad(&set);
        assert_eq!(r.loss, 0.0);
        assert!(r.grads.iter().all(|&g| g == 0.0));

        let set = DetectionSet::from_pairs(&[(3.0, None), (1.0, None)], 0.5).unwrap();
        assert_eq!(brs_loss_grad(&set).0, GradResult::zero(2));
    }

    #[test]
    fn closed_forms() {
        assert_eq!(count_reference_ops(100, 99_900), 10_000_000);
        assert_eq!(count_reference_ops(0, 12345), 0);
        assert_eq!(bucketed_ops_bound(100), 30_100);
    }

    #[test]
    fn ops_stay_under_bound() {
        let (_, ops) = brs_loss_grad(&e1(0.5));
        assert!(ops.diff_ops <= bucketed_ops_bound(2));
        assert!(ops.total_ops >= ops.diff_ops + ops.sort_ops);
    }
}
