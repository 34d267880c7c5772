//! Ranking-based detection losses with Identity Update gradients.
//!
//! * [`reference`]: AP and Rank&Sort losses computed by looping over the
//!   positives.
//! * [`bucketed`]: the same losses with negatives grouped into buckets
//!   between consecutive positives. With `delta = 0` and no ties the
//!   gradients match the reference ones exactly.
//! * [`oracle`]: a dense pairwise evaluator used as ground truth on small
//!   instances.
//! * [`synthetic`], [`jsonl`], [`bench`]: data generation, exchange format
//!   and the timing harness.

pub mod bench;
pub mod bucketed;
pub mod error;
pub mod jsonl;
mod kernel;
pub mod loss;
pub mod model;
pub mod oracle;
mod positives;
pub mod reference;
pub mod synthetic;

pub use bucketed::{bap_loss_grad, brs_loss_grad, count_reference_ops, OpCounters};
pub use error::{Error, Result};
pub use loss::{evaluate, LossKind};
pub use model::{
    rank_stats, smooth_step, sort_and_bucket, DetectionSet, GradResult, Label, RankStats,
    SmoothStep, SortedBuckets, DEFAULT_DELTA,
};
pub use oracle::{oracle_grad, OracleKind, PairwiseOracleState};
pub use reference::{ap_loss_grad, rs_loss_grad, ReferenceConfig};
pub use synthetic::{generate, SyntheticConfig};
