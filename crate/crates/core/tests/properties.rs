use proptest::collection::vec;
use proptest::prelude::*;
use rankbucket::jsonl::{read_set, write_set};
use rankbucket::{
    ap_loss_grad, bap_loss_grad, brs_loss_grad, oracle_grad, rs_loss_grad, DetectionSet,
    GradResult, OracleKind, ReferenceConfig,
};

/// Tie-free sets: scores are distinct multiples of 1/8 plus a per-entry offset.
fn detection_set(max_len: usize) -> impl Strategy<Value = DetectionSet> {
    vec((any::<bool>(), 0.0..1.0f64), 1..max_len)
        .prop_flat_map(|entries| {
            let n = entries.len();
            (
                Just(entries),
                Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
            )
        })
        .prop_map(|(entries, order)| {
            let pairs: Vec<(f64, Option<f64>)> = entries
                .iter()
                .zip(order)
                .map(|(&(pos, iou), rank)| (rank as f64 * 0.125 - 2.0, pos.then_some(iou)))
                .collect();
            DetectionSet::from_pairs(&pairs, 0.0).unwrap()
        })
}

fn close(a: &GradResult, b: &GradResult) -> bool {
    let near =
        |x: f64, y: f64| (x - y).abs() <= 1e-12 || (x - y).abs() <= 1e-9 * x.abs().max(y.abs());
    near(a.loss, b.loss)
        && near(a.ranking_component, b.ranking_component)
        && near(a.sorting_component, b.sorting_component)
        && a.grads.iter().zip(&b.grads).all(|(x, y)| near(*x, *y))
}

proptest! {
    #[test]
    fn bucketed_matches_reference_without_smoothing(set in detection_set(80)) {
        let cfg = ReferenceConfig::default();
        prop_assert!(close(&bap_loss_grad(&set).0, &ap_loss_grad(&set, cfg)));
        prop_assert!(close(&brs_loss_grad(&set).0, &rs_loss_grad(&set, cfg)));
    }

    #[test]
    fn reference_matches_oracle(set in detection_set(60), delta in prop::sample::select(vec![0.0, 0.2, 0.5, 2.0])) {
        let set = set.with_delta(delta).unwrap();
        let cfg = ReferenceConfig::default();
        prop_assert!(close(&ap_loss_grad(&set, cfg), &oracle_grad(&set, OracleKind::Ap).unwrap()));
        prop_assert!(close(&rs_loss_grad(&set, cfg), &oracle_grad(&set, OracleKind::Rs).unwrap()));
    }

    #[test]
    fn gradients_sum_to_zero(set in detection_set(80), delta in 0.0..1.5f64) {
        let set = set.with_delta(delta).unwrap();
        for r in [
            ap_loss_grad(&set, ReferenceConfig::default()),
            rs_loss_grad(&set, ReferenceConfig::default()),
            bap_loss_grad(&set).0,
            brs_loss_grad(&set).0,
        ] {
            prop_assert!(r.grads.iter().sum::<f64>().abs() <= 1e-9);
        }
    }

    #[test]
    fn jsonl_round_trips(set in detection_set(50)) {
        let mut buf = Vec::new();
        write_set(&mut buf, &set, None).unwrap();
        let (back, meta) = read_set(buf.as_slice(), set.delta()).unwrap();
        prop_assert_eq!(back, set);
        prop_assert!(meta.is_none());
    }
}
