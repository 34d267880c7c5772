//! Shared domain types: detection sets, the smoothed step, rank statistics
//! and the sort-and-bucket transform.

use std::cmp::Ordering;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothing half-width used when none is given.
pub const DEFAULT_DELTA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

/// Piecewise-linear surrogate of the unit step with half-width `delta`.
///
/// `H(x) = 0` below `-delta`, `1` above `delta` and linear in between. With
/// `delta == 0` it degenerates to the unit step with `H(0) = 0.5`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothStep {
    delta: f64,
    inv_width: f64,
}

impl SmoothStep {
    pub fn new(delta: f64) -> Self {
        debug_assert!(delta >= 0.0);
        let inv_width = if delta > 0.0 { 0.5 / delta } else { 0.0 };
        Self { delta, inv_width }
    }

    pub fn delta(self) -> f64 {
        self.delta
    }

    #[inline(always)]
    pub fn eval(self, x: f64) -> f64 {
        if self.delta > 0.0 {
            Ramp::from(self).h(x)
        } else {
            Hard.h(x)
        }
    }
}

/// Step evaluation monomorphised by the hot loops so the `delta == 0` branch
/// is resolved once per call instead of once per pair.
pub(crate) trait StepFn: Copy {
    fn h(self, x: f64) -> f64;
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Hard;

impl StepFn for Hard {
    #[inline(always)]
    fn h(self, x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            0.0
        } else {
            0.5
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Ramp {
    delta: f64,
    inv_width: f64,
}

impl From<SmoothStep> for Ramp {
    fn from(s: SmoothStep) -> Self {
        Ramp {
            delta: s.delta,
            inv_width: s.inv_width,
        }
    }
}

impl StepFn for Ramp {
    // (x + delta) / (2 delta) hits exactly 0 at x = -delta, which keeps
    // trivial negatives at zero mass.
    #[inline(always)]
    fn h(self, x: f64) -> f64 {
        ((x + self.delta) * self.inv_width).clamp(0.0, 1.0)
    }
}

/// Runs `$body` with `$h` bound to the monomorphic step for `$step`.
macro_rules! with_step {
    ($step:expr, |$h:ident| $body:expr) => {{
        let step: $crate::model::SmoothStep = $step;
        if step.delta() > 0.0 {
            let $h = $crate::model::Ramp::from(step);
            $body
        } else {
            let $h = $crate::model::Hard;
            $body
        }
    }};
}
pub(crate) use with_step;

/// The smoothed step `H(x)` for half-width `delta`.
pub fn smooth_step(x: f64, delta: f64) -> f64 {
    SmoothStep::new(delta).eval(x)
}

/// A flat set of detection logits with binary labels and per-positive IoU
/// targets.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionSet {
    scores: Vec<f64>,
    labels: Vec<Label>,
    ious: Vec<Option<f64>>,
    delta: f64,
}

impl DetectionSet {
    /// Validates and builds a set. `ious[i]` must be `Some` exactly when
    /// `labels[i]` is positive.
    pub fn new(
        scores: Vec<f64>,
        labels: Vec<Label>,
        ious: Vec<Option<f64>>,
        delta: f64,
    ) -> Result<Self> {
        let n = scores.len();
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                what: "labels",
                got: labels.len(),
                expected: n,
            });
        }
        if ious.len() != n {
            return Err(Error::LengthMismatch {
                what: "ious",
                got: ious.len(),
                expected: n,
            });
        }
        check_delta(delta)?;
        for (index, ((&s, &label), &iou)) in scores.iter().zip(&labels).zip(&ious).enumerate() {
            if !s.is_finite() {
                return Err(Error::NonFiniteScore { index });
            }
            match (label, iou) {
                (Label::Positive, None) => return Err(Error::MissingIou { index }),
                (Label::Negative, Some(_)) => return Err(Error::UnexpectedIou { index }),
                (Label::Positive, Some(iou)) if !(0.0..=1.0).contains(&iou) => {
                    return Err(Error::IouOutOfRange { index, iou })
                }
                _ => {}
            }
        }
        Ok(Self {
            scores,
            labels,
            ious,
            delta,
        })
    }

    /// Builds a set from `(score, iou)` pairs; `Some(iou)` marks a positive.
    pub fn from_pairs(pairs: &[(f64, Option<f64>)], delta: f64) -> Result<Self> {
        let scores = pairs.iter().map(|p| p.0).collect();
        let labels = pairs
            .iter()
            .map(|p| {
                if p.1.is_some() {
                    Label::Positive
                } else {
                    Label::Negative
                }
            })
            .collect();
        let ious = pairs.iter().map(|p| p.1).collect();
        Self::new(scores, labels, ious, delta)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        self.delta = delta;
        Ok(self)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn ious(&self) -> &[Option<f64>] {
        &self.ious
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn step(&self) -> SmoothStep {
        SmoothStep::new(self.delta)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn is_positive(&self, i: usize) -> bool {
        self.labels[i].is_positive()
    }

    pub fn positive_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_positive(i)).collect()
    }

    pub fn negative_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_positive(i)).collect()
    }

    pub fn num_positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }

    /// Returns a copy with entries reordered so that entry `k` of the result
    /// is entry `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.len());
        Self {
            scores: order.iter().map(|&i| self.scores[i]).collect(),
            labels: order.iter().map(|&i| self.labels[i]).collect(),
            ious: order.iter().map(|&i| self.ious[i]).collect(),
            delta: self.delta,
        }
    }

    pub(crate) fn iou_or_zero(&self, i: usize) -> f64 {
        self.ious[i].unwrap_or(0.0)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDelta(delta))
    }
}

/// Loss value and per-logit gradients, aligned with the input order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradResult {
    pub loss: f64,
    pub ranking_component: f64,
    pub sorting_component: f64,
    pub grads: Vec<f64>,
}

impl GradResult {
    pub fn zero(len: usize) -> Self {
        Self {
            loss: 0.0,
            ranking_component: 0.0,
            sorting_component: 0.0,
            grads: vec![0.0; len],
        }
    }

    pub(crate) fn from_components(ranking: f64, sorting: f64, grads: Vec<f64>) -> Self {
        Self {
            loss: ranking + sorting,
            ranking_component: ranking,
            sorting_component: sorting,
            grads,
        }
    }
}

/// Sorted view of a [`DetectionSet`] with its negatives grouped into
/// buckets between consecutive positives.
#[derive(Clone, Debug, PartialEq)]
pub struct SortedBuckets {
    /// Sorted position to original index, scores non-increasing.
    pub perm: Vec<usize>,
    /// Sorted positions of the positives, ascending.
    pub positive_positions: Vec<usize>,
    /// `|P| + 1` bucket sizes; bucket 0 sits above every positive.
    pub bucket_sizes: Vec<usize>,
    /// Bucket means, `None` for empty buckets.
    pub prototypes: Vec<Option<f64>>,
}

impl SortedBuckets {
    pub fn num_buckets(&self) -> usize {
        self.bucket_sizes.len()
    }

    /// Sorted positions covered by bucket `j`.
    pub fn bucket_positions(&self, j: usize) -> Range<usize> {
        let start = if j == 0 {
            0
        } else {
            self.positive_positions[j - 1] + 1
        };
        let end = self
            .positive_positions
            .get(j)
            .copied()
            .unwrap_or(self.perm.len());
        start..end
    }

    /// Original indices of the members of bucket `j`, in sorted order.
    pub fn bucket_members(&self, j: usize) -> &[usize] {
        &self.perm[self.bucket_positions(j)]
    }
}

/// Descending order of `set`; exact ties put positives first, then lower
/// original indices.
pub(crate) fn descending_order(set: &DetectionSet, mut count: impl FnMut()) -> Vec<usize> {
    let scores = set.scores();
    let labels = set.labels();
    let mut perm: Vec<usize> = (0..set.len()).collect();
    perm.sort_by(|&a, &b| {
        count();
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| labels[b].is_positive().cmp(&labels[a].is_positive()))
            .then_with(|| a.cmp(&b))
    });
    perm
}

/// Sorts the set by descending score and buckets runs of negatives between
/// consecutive positives. Each non-empty bucket's prototype is the mean of
/// its members.
pub fn sort_and_bucket(set: &DetectionSet) -> SortedBuckets {
    let perm = descending_order(set, || {});
    let positive_positions: Vec<usize> = perm
        .iter()
        .enumerate()
        .filter(|(_, &i)| set.is_positive(i))
        .map(|(pos, _)| pos)
        .collect();

    let mut out = SortedBuckets {
        perm,
        positive_positions,
        bucket_sizes: Vec::new(),
        prototypes: Vec::new(),
    };
    let scores = set.scores();
    let buckets = out.positive_positions.len() + 1;
    for j in 0..buckets {
        let members = out.bucket_members(j);
        let size = members.len();
        let proto = bucket_mean(members.iter().map(|&i| scores[i]));
        out.bucket_sizes.push(size);
        out.prototypes.push(proto);
    }
    out
}

/// Mean of a bucket's scores, clamped into the member range so rounding
/// cannot push it outside.
pub(crate) fn bucket_mean(members: impl Iterator<Item = f64>) -> Option<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in members {
        n += 1;
        sum += s;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (n > 0).then(|| (sum / n as f64).clamp(lo, hi))
}

/// Smoothed rank counts of one positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankStats {
    /// `1 + sum over other positives of H(s_j - s_i)`.
    pub rank_plus: f64,
    /// `sum over negatives of H(s_j - s_i)`.
    pub n_fp: f64,
    pub rank: f64,
}

/// Rank statistics of positive `i`; the detection itself counts as exactly 1.
pub fn rank_stats(set: &DetectionSet, i: usize) -> Result<RankStats> {
    if i >= set.len() || !set.is_positive(i) {
        return Err(Error::NotPositive { index: i });
    }
    let step = set.step();
    let si = set.scores()[i];
    let mut rank_plus = 1.0;
    let mut n_fp = 0.0;
    for (j, (&sj, label)) in set.scores().iter().zip(set.labels()).enumerate() {
        if j == i {
            continue;
        }
        let h = step.eval(sj - si);
        if label.is_positive() {
            rank_plus += h;
        } else {
            n_fp += h;
        }
    }
    Ok(RankStats {
        rank_plus,
        n_fp,
        rank: rank_plus + n_fp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e1() -> DetectionSet {
        DetectionSet::from_pairs(
            &[
                (3.0, None),
                (2.5, None),
                (2.0, Some(0.9)),
                (1.0, None),
                (0.5, Some(0.6)),
                (0.0, None),
            ],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn smooth_step_examples() {
        assert_eq!(smooth_step(-1.0, 0.5), 0.0);
        assert_eq!(smooth_step(0.0, 0.5), 0.5);
        assert_eq!(smooth_step(0.25, 0.5), 0.75);
        assert_eq!(smooth_step(-0.5, 0.5), 0.0);
        assert_eq!(smooth_step(0.5, 0.5), 1.0);
        assert_eq!(smooth_step(-1e-300, 0.0), 0.0);
        assert_eq!(smooth_step(0.0, 0.0), 0.5);
        assert_eq!(smooth_step(1e-300, 0.0), 1.0);
    }

    #[test]
    fn ramp_is_exactly_zero_at_lower_edge() {
        for delta in [0.1, 0.3, 0.7, 1.9, 1e-6] {
            assert_eq!(smooth_step(-delta, delta), 0.0, "delta {delta}");
        }
    }

    #[test]
    fn bucket_example_from_mixed_set() {
        let b = sort_and_bucket(&e1());
        assert_eq!(b.perm, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(b.positive_positions, vec![2, 4]);
        assert_eq!(b.bucket_sizes, vec![2, 1, 1]);
        assert_eq!(b.prototypes, vec![Some(2.75), Some(1.0), Some(0.0)]);
        assert_eq!(b.bucket_members(0), &[0, 1]);
    }

    #[test]
    fn consecutive_positives_leave_empty_buckets() {
        let set = DetectionSet::from_pairs(&[(1.0, None), (1.5, Some(0.5)), (2.0, Some(0.7))], 0.5)
            .unwrap();
        let b = sort_and_bucket(&set);
        assert_eq!(b.perm, vec![2, 1, 0]);
        assert_eq!(b.bucket_sizes, vec![0, 0, 1]);
        assert_eq!(b.prototypes, vec![None, None, Some(1.0)]);
    }

    #[test]
    fn all_negative_set_is_one_bucket() {
        let pairs: Vec<_> = [0.1, -2.0, 3.0, 0.5, 1.4]
            .iter()
            .map(|&s| (s, None))
            .collect();
        let b = sort_and_bucket(&DetectionSet::from_pairs(&pairs, 0.5).unwrap());
        assert_eq!(b.bucket_sizes, vec![5]);
        assert!((b.prototypes[0].unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn ties_put_positives_first() {
        let set = DetectionSet::from_pairs(&[(1.0, None), (1.0, Some(0.5))], 0.0).unwrap();
        let b = sort_and_bucket(&set);
        assert_eq!(b.perm, vec![1, 0]);
        assert_eq!(b.bucket_sizes, vec![0, 1]);
    }

    #[test]
    fn rank_stats_examples() {
        let set = e1();
        let top = rank_stats(&set, 2).unwrap();
        assert_eq!((top.rank_plus, top.n_fp, top.rank), (1.0, 2.0, 3.0));
        let p2 = rank_stats(&set, 4).unwrap();
        assert_eq!((p2.rank_plus, p2.n_fp, p2.rank), (2.0, 3.0, 5.0));
        assert!(matches!(
            rank_stats(&set, 0),
            Err(Error::NotPositive { index: 0 })
        ));

        let alone = DetectionSet::from_pairs(&[(5.0, Some(0.3)), (1.0, None)], 0.0).unwrap();
        let s = rank_stats(&alone, 0).unwrap();
        assert_eq!((s.rank_plus, s.n_fp, s.rank), (1.0, 0.0, 1.0));

        let edge = DetectionSet::from_pairs(&[(0.0, Some(0.3)), (0.5, None)], 0.5).unwrap();
        assert_eq!(rank_stats(&edge, 0).unwrap().n_fp, 1.0);
    }

    #[test]
    fn rejects_malformed_sets() {
        let e = DetectionSet::new(vec![1.0], vec![Label::Positive], vec![None], 0.5);
        assert!(matches!(e, Err(Error::MissingIou { index: 0 })));
        let e = DetectionSet::new(vec![1.0], vec![Label::Negative], vec![Some(0.1)], 0.5);
        assert!(matches!(e, Err(Error::UnexpectedIou { index: 0 })));
        let e = DetectionSet::from_pairs(&[(1.0, Some(1.5))], 0.5);
        assert!(matches!(e, Err(Error::IouOutOfRange { .. })));
        let e = DetectionSet::from_pairs(&[(1.0, None)], -0.1);
        assert!(matches!(e, Err(Error::InvalidDelta(_))));
        let e = DetectionSet::from_pairs(&[(f64::NAN, None)], 0.1);
        assert!(matches!(e, Err(Error::NonFiniteScore { index: 0 })));
        let e = DetectionSet::new(vec![1.0, 2.0], vec![Label::Negative], vec![None], 0.5);
        assert!(matches!(e, Err(Error::LengthMismatch { .. })));
    }

    fn arb_set() -> impl Strategy<Value = DetectionSet> {
        (
            prop::collection::vec(
                (-5.0f64..5.0, prop::option::weighted(0.3, 0.0f64..=1.0)),
                1..60,
            ),
            0.0f64..1.0,
        )
            .prop_map(|(pairs, delta)| DetectionSet::from_pairs(&pairs, delta).unwrap())
    }

    proptest! {
        #[test]
        fn step_is_monotone_and_symmetric(a in -3.0f64..3.0, b in -3.0f64..3.0, delta in 0.0f64..2.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(smooth_step(lo, delta) <= smooth_step(hi, delta));
            let sum = smooth_step(a, delta) + smooth_step(-a, delta);
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            let h = smooth_step(a, delta);
            prop_assert!((0.0..=1.0).contains(&h));
        }

        #[test]
        fn buckets_partition_negatives(set in arb_set()) {
            let b = sort_and_bucket(&set);
            let n_neg = set.len() - set.num_positives();
            prop_assert_eq!(b.bucket_sizes.iter().sum::<usize>(), n_neg);
            prop_assert_eq!(b.num_buckets(), set.num_positives() + 1);

            let mut seen = b.perm.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..set.len()).collect::<Vec<_>>());
            for w in b.perm.windows(2) {
                prop_assert!(set.scores()[w[0]] >= set.scores()[w[1]]);
            }

            // Flattening buckets and positives in order reproduces the sort.
            let mut flat = Vec::new();
            for j in 0..b.num_buckets() {
                flat.extend_from_slice(b.bucket_members(j));
                if let Some(&pos) = b.positive_positions.get(j) {
                    flat.push(b.perm[pos]);
                }
            }
            prop_assert_eq!(&flat, &b.perm);

            for j in 0..b.num_buckets() {
                let members = b.bucket_members(j);
                prop_assert!(members.iter().all(|&i| !set.is_positive(i)));
                match b.prototypes[j] {
                    None => prop_assert!(members.is_empty()),
                    Some(p) => {
                        let scores: Vec<f64> = members.iter().map(|&i| set.scores()[i]).collect();
                        let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        prop_assert!(lo <= p && p <= hi);
                        if scores.len() == 1 {
                            prop_assert_eq!(p, scores[0]);
                        }
                    }
                }
            }
        }

        #[test]
        fn rank_is_at_least_rank_plus(set in arb_set()) {
            for i in set.positive_indices() {
                let r = rank_stats(&set, i).unwrap();
                prop_assert!(r.rank >= r.rank_plus && r.rank_plus >= 1.0);
            }
        }
    }
}
