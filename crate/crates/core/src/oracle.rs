//! Brute-force pairwise evaluator.
//!
//! Materialises the full difference-transform matrix and the primary-term
//! matrix, then reads gradients off as column sums minus row sums. It uses
//! neither the loop over positives nor trivial-negative pruning, so agreement
//! with the other implementations is independent evidence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DetectionSet, GradResult, SmoothStep};

/// Largest instance the oracle accepts; two dense `L x L` matrices of `f64`.
pub const ORACLE_MAX_LOGITS: usize = 5_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleKind {
    Ap,
    Rs,
}

/// Dense matrices for one instance, row-major `L x L`.
#[derive(Clone, Debug)]
pub struct PairwiseOracleState {
    len: usize,
    num_positives: usize,
    x: Vec<f64>,
    primary: Vec<f64>,
    ranking_error: Vec<f64>,
    sorting_error: Vec<f64>,
}

impl PairwiseOracleState {
    pub fn build(set: &DetectionSet, kind: OracleKind) -> Result<Self> {
        let len = set.len();
        if len > ORACLE_MAX_LOGITS {
            return Err(Error::TooLarge {
                len,
                limit: ORACLE_MAX_LOGITS,
            });
        }
        let s = set.scores();
        let step = SmoothStep::new(set.delta());
        let pos = |i: usize| set.is_positive(i);

        let mut x = vec![0.0; len * len];
        for i in 0..len {
            for j in 0..len {
                x[i * len + j] = s[j] - s[i];
            }
        }
        let hx = |i: usize, j: usize| step.eval(x[i * len + j]);

        let mut primary = vec![0.0; len * len];
        let mut ranking_error = vec![0.0; len];
        let mut sorting_error = vec![0.0; len];
        for i in (0..len).filter(|&i| pos(i)) {
            let mut rank_plus = 1.0;
            let mut n_fp = 0.0;
            for j in (0..len).filter(|&j| j != i) {
                if pos(j) {
                    rank_plus += hx(i, j);
                } else {
                    n_fp += hx(i, j);
                }
            }
            let err = n_fp / (rank_plus + n_fp);
            ranking_error[i] = err;
            if n_fp > 0.0 {
                for j in (0..len).filter(|&j| !pos(j)) {
                    primary[i * len + j] = err * hx(i, j) / n_fp;
                }
            }

            if kind == OracleKind::Rs {
                let iou = |k: usize| set.iou_or_zero(k);
                let own = 1.0 - iou(i);
                let (mut cur_num, mut cur_den) = (own, 1.0);
                let (mut tgt_num, mut tgt_den) = (own, 1.0);
                let mut mass = 0.0;
                for j in (0..len).filter(|&j| j != i && pos(j)) {
                    let h = hx(i, j);
                    cur_num += h * (1.0 - iou(j));
                    cur_den += h;
                    if iou(j) >= iou(i) {
                        tgt_num += h * (1.0 - iou(j));
                        tgt_den += h;
                    } else {
                        mass += h;
                    }
                }
                let diff = cur_num / cur_den - tgt_num / tgt_den;
                sorting_error[i] = diff;
                if mass > 0.0 {
                    for j in (0..len).filter(|&j| j != i && pos(j) && iou(j) < iou(i)) {
                        primary[i * len + j] = diff * hx(i, j) / mass;
                    }
                }
            }
        }

        Ok(Self {
            len,
            num_positives: set.num_positives(),
            x,
            primary,
            ranking_error,
            sorting_error,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `x_ij = s_j - s_i`.
    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.len + j]
    }

    /// Primary term `L_ij`.
    pub fn primary(&self, i: usize, j: usize) -> f64 {
        self.primary[i * self.len + j]
    }

    /// Loss and gradients `(1/|P|) (sum_j L_ji - sum_j L_ij)`.
    pub fn grad_result(&self, set: &DetectionSet) -> GradResult {
        let n = self.len;
        if self.num_positives == 0 {
            return GradResult::zero(n);
        }
        let z = self.num_positives as f64;

        let mut ranking = 0.0;
        for i in 0..n {
            for j in (0..n).filter(|&j| !set.is_positive(j)) {
                ranking += self.primary(i, j);
            }
        }
        let sorting: f64 = self.sorting_error.iter().sum();

        let mut grads = vec![0.0; n];
        for (i, g) in grads.iter_mut().enumerate() {
            let incoming: f64 = (0..n).map(|j| self.primary(j, i)).sum();
            let outgoing: f64 = (0..n).map(|j| self.primary(i, j)).sum();
            *g = (incoming - outgoing) / z;
        }
        GradResult::from_components(ranking / z, sorting / z, grads)
    }

    /// Per-positive ranking errors `N_FP(i) / rank(i)`, zero for negatives.
    pub fn ranking_errors(&self) -> &[f64] {
        &self.ranking_error
    }
}

pub fn oracle_grad(set: &DetectionSet, kind: OracleKind) -> Result<GradResult> {
    Ok(PairwiseOracleState::build(set, kind)?.grad_result(set))
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn hand_example_ap() {
        let r = oracle_grad(&e1(), OracleKind::Ap).unwrap();
        assert!((r.loss - 19.0 / 30.0).abs() <= 1e-12);
        let want = [4.0 / 15.0, 4.0 / 15.0, -1.0 / 3.0, 0.1, -0.3, 0.0];
        for (g, w) in r.grads.iter().zip(want) {
            assert!((g - w).abs() <= 1e-12, "{:?}", r.grads);
        }
    }

    #[test]
    fn hand_example_rs() {
        let set = DetectionSet::from_pairs(&[(2.0, Some(0.6)), (0.5, Some(0.9))], 0.0).unwrap();
        let r = oracle_grad(&set, OracleKind::Rs).unwrap();
        assert!((r.loss - 0.075).abs() <= 1e-12);
        assert!((r.grads[0] - 0.075).abs() <= 1e-12);
        assert!((r.grads[1] + 0.075).abs() <= 1e-12);
    }

    #[test]
    fn matrices_have_expected_structure() {
        let set = e1();
        let st = PairwiseOracleState::build(&set, OracleKind::Rs).unwrap();
        for i in 0..st.len() {
            for j in 0..st.len() {
                assert_eq!(st.x(i, j), -st.x(j, i));
                if !set.is_positive(i) {
                    assert_eq!(st.primary(i, j), 0.0);
                }
            }
        }
        let ap = PairwiseOracleState::build(&set, OracleKind::Ap).unwrap();
        for i in 0..ap.len() {
            for j in set.positive_indices() {
                assert_eq!(ap.primary(i, j), 0.0);
            }
        }
    }

    #[test]
    fn positives_on_top_leave_primary_empty() {
        let set = DetectionSet::from_pairs(
            &[
                (0.0, None),
                (4.0, Some(0.2)),
                (-1.0, None),
                (3.0, Some(0.4)),
            ],
            0.5,
        )
        .unwrap();
        let st = PairwiseOracleState::build(&set, OracleKind::Ap).unwrap();
        assert!(st.primary.iter().all(|&v| v == 0.0));
        assert_eq!(st.grad_result(&set).loss, 0.0);
    }

    #[test]
    fn size_guard() {
        let pairs = vec![(0.0, None); ORACLE_MAX_LOGITS + 1];
        let set = DetectionSet::from_pairs(&pairs, 0.5).unwrap();
        assert!(matches!(
            oracle_grad(&set, OracleKind::Ap),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn zero_positives() {
        let set = DetectionSet::from_pairs(&[(1.0, None), (2.0, None)], 0.5).unwrap();
        assert_eq!(
            oracle_grad(&set, OracleKind::Rs).unwrap(),
            GradResult::zero(2)
        );
    }
}
