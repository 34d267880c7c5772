//! Seeded synthetic logits for benchmarking.
//!
//! Positive scores are drawn from `N(pos_mean, pos_std²)`, negative scores
//! from `N(neg_mean, neg_std²)` and positive IoUs from `U(0, 1)`. Positions
//! of the positives are shuffled. The stream comes from `ChaCha8Rng`, so a
//! given `(config, seed)` always yields the same set.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DetectionSet, Label, DEFAULT_DELTA};

pub const GENERATOR_NAME: &str = "rankbucket-synthetic/1";
pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9, rand_distr 0.5 Normal)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_logits: usize,
    /// Percentage of positives, e.g. `0.1` for 0.1%.
    pub positive_pct: f64,
    pub pos_mean: f64,
    pub pos_std: f64,
    pub neg_mean: f64,
    pub neg_std: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(num_logits: usize, positive_pct: f64, seed: u64) -> Self {
        Self {
            num_logits,
            positive_pct,
            pos_mean: -1.0,
            pos_std: 1.0,
            neg_mean: 1.0,
            neg_std: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_logits == 0 {
            return Err(Error::InvalidConfig("num_logits must be at least 1".into()));
        }
        if !(0.0..=100.0).contains(&self.positive_pct) {
            return Err(Error::InvalidConfig(format!(
                "positive_pct must be within [0, 100], got {}",
                self.positive_pct
            )));
        }
        for (name, std) in [("pos_std", self.pos_std), ("neg_std", self.neg_std)] {
            if !(std.is_finite() && std > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {std}"
                )));
            }
        }
        for (name, mean) in [("pos_mean", self.pos_mean), ("neg_mean", self.neg_mean)] {
            if !mean.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// `round(L * m / 100)`.
    pub fn num_positives(&self) -> usize {
        (self.num_logits as f64 * self.positive_pct / 100.0).round() as usize
    }
}

/// Header written in front of generated JSONL files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMetadata {
    pub generator: String,
    pub prng: String,
    pub num_positives: usize,
    #[serde(flatten)]
    pub config: SyntheticConfig,
}

impl GeneratorMetadata {
    pub fn new(cfg: &SyntheticConfig) -> Self {
        Self {
            generator: GENERATOR_NAME.to_string(),
            prng: PRNG_NAME.to_string(),
            num_positives: cfg.num_positives(),
            config: cfg.clone(),
        }
    }
}

/// Generates a tie-free set with smoothing width [`DEFAULT_DELTA`].
pub fn generate(cfg: &SyntheticConfig) -> Result<DetectionSet> {
    cfg.validate()?;
    let n = cfg.num_logits;
    let p = cfg.num_positives();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut labels = vec![Label::Negative; n];
    labels[..p].fill(Label::Positive);
    labels.shuffle(&mut rng);

    let pos_dist = Normal::new(cfg.pos_mean, cfg.pos_std).expect("validated std");
    let neg_dist = Normal::new(cfg.neg_mean, cfg.neg_std).expect("validated std");
    let mut scores = Vec::with_capacity(n);
    let mut ious = Vec::with_capacity(n);
    for label in &labels {
        match label {
            Label::Positive => {
                scores.push(pos_dist.sample(&mut rng));
                ious.push(Some(rng.random::<f64>()));
            }
            Label::Negative => {
                scores.push(neg_dist.sample(&mut rng));
                ious.push(None);
            }
        }
    }
    break_ties(&mut scores);
    DetectionSet::new(scores, labels, ious, DEFAULT_DELTA)
}

/// Nudges exactly-equal scores apart by single ulps (lower index keeps its
/// value), leaving every other score untouched.
pub(crate) fn break_ties(scores: &mut [f64]) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    if !order.windows(2).any(|w| scores[w[0]] == scores[w[1]]) {
        return;
    }
    for k in 1..order.len() {
        let prev = scores[order[k - 1]];
        let cur = &mut scores[order[k]];
        if *cur <= prev {
            *cur = prev.next_up();
        }
    }
}
