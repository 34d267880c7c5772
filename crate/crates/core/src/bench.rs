//! Timing and operation-count benchmark over a grid of synthetic scenarios.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{evaluate, LossKind};
use crate::model::{DetectionSet, DEFAULT_DELTA};
use crate::oracle::ORACLE_MAX_LOGITS;
use crate::reference::ReferenceConfig;
use crate::synthetic::{generate, SyntheticConfig};

pub const GRID_SIZES: [usize; 3] = [10_000, 100_000, 1_000_000];
pub const GRID_PCTS: [f64; 4] = [0.1, 1.0, 2.0, 5.0];
pub const DEFAULT_REPS: usize = 3;

/// CSV column order.
pub const CSV_HEADER: [&str; 11] = [
    "loss",
    "L",
    "m",
    "delta",
    "seed",
    "rep",
    "wall_time_s",
    "diff_ops",
    "sort_ops",
    "total_ops",
    "loss_value",
];

/// One timed loss evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub loss: LossKind,
    #[serde(rename = "L")]
    pub num_logits: usize,
    pub m: f64,
    pub delta: f64,
    pub seed: u64,
    pub rep: usize,
    pub wall_time_s: f64,
    pub diff_ops: u64,
    pub sort_ops: u64,
    pub total_ops: u64,
    pub loss_value: f64,
}

#[derive(Clone, Debug)]
pub struct BenchPlan {
    pub sizes: Vec<usize>,
    pub pcts: Vec<f64>,
    pub reps: usize,
    pub losses: Vec<LossKind>,
    pub delta: f64,
    pub seed: u64,
    pub reference: ReferenceConfig,
    /// Worker threads for data generation; evaluation is always sequential.
    pub gen_threads: usize,
}

impl BenchPlan {
    /// The full `L x m` grid with three repetitions.
    pub fn grid(losses: Vec<LossKind>) -> Self {
        Self {
            sizes: GRID_SIZES.to_vec(),
            pcts: GRID_PCTS.to_vec(),
            reps: DEFAULT_REPS,
            losses,
            delta: DEFAULT_DELTA,
            seed: 0,
            reference: ReferenceConfig::default(),
            gen_threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.losses.is_empty() || self.sizes.is_empty() || self.pcts.is_empty()
        {
            return Err(Error::InvalidConfig(
                "benchmark needs at least one size, percentage, loss and repetition".into(),
            ));
        }
        if self.losses.iter().any(|k| k.is_oracle()) {
            if let Some(&len) = self.sizes.iter().find(|&&l| l > ORACLE_MAX_LOGITS) {
                return Err(Error::TooLarge {
                    len,
                    limit: ORACLE_MAX_LOGITS,
                });
            }
        }
        for &l in &self.sizes {
            for &m in &self.pcts {
                SyntheticConfig::new(l, m, self.seed).validate()?;
            }
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::InvalidDelta(self.delta));
        }
        Ok(())
    }

    pub fn num_records(&self) -> usize {
        self.sizes.len() * self.pcts.len() * self.reps * self.losses.len()
    }

    /// Data seed of repetition `rep`; all losses of a repetition share it.
    pub fn seed_for(&self, rep: usize) -> u64 {
        self.seed.wrapping_add(rep as u64)
    }
}

/// Runs the plan, handing each record to `sink` as soon as it is measured.
pub fn run(
    plan: &BenchPlan,
    mut sink: impl FnMut(&BenchRecord) -> Result<()>,
) -> Result<Vec<BenchRecord>> {
    plan.validate()?;
    let mut out = Vec::with_capacity(plan.num_records());
    for &num_logits in &plan.sizes {
        for &m in &plan.pcts {
            let sets = generate_reps(plan, num_logits, m)?;
            for (rep, set) in sets.iter().enumerate() {
                for &kind in &plan.losses {
                    let rec = measure(plan, kind, set, num_logits, m, rep)?;
                    sink(&rec)?;
                    out.push(rec);
                }
            }
        }
    }
    Ok(out)
}

fn generate_reps(plan: &BenchPlan, num_logits: usize, m: f64) -> Result<Vec<DetectionSet>> {
    let make = |rep: usize| -> Result<DetectionSet> {
        generate(&SyntheticConfig::new(num_logits, m, plan.seed_for(rep)))?.with_delta(plan.delta)
    };
    let threads = plan.gen_threads.clamp(1, plan.reps);
    if threads == 1 {
        return (0..plan.reps).map(make).collect();
    }
    let mut slots: Vec<Option<Result<DetectionSet>>> = (0..plan.reps).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (t, chunk) in slots.chunks_mut(plan.reps.div_ceil(threads)).enumerate() {
            let make = &make;
            let base = t * plan.reps.div_ceil(threads);
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(make(base + k));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every slot filled"))
        .collect()
}

fn measure(
    plan: &BenchPlan,
    kind: LossKind,
    set: &DetectionSet,
    num_logits: usize,
    m: f64,
    rep: usize,
) -> Result<BenchRecord> {
    let start = Instant::now();
    let (result, ops) = evaluate(kind, black_box(set), plan.reference)?;
    let elapsed = start.elapsed().as_secs_f64();
    black_box(&result.grads);
    Ok(BenchRecord {
        loss: kind,
        num_logits,
        m,
        delta: plan.delta,
        seed: plan.seed_for(rep),
        rep,
        wall_time_s: elapsed.max(1e-9),
        diff_ops: ops.diff_ops,
        sort_ops: ops.sort_ops,
        total_ops: ops.total_ops,
        loss_value: result.loss,
    })
}

/// CSV writer with the fixed header already emitted.
pub fn csv_writer<W: Write>(w: W) -> Result<csv::Writer<W>> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(CSV_HEADER)?;
    Ok(wtr)
}

pub fn write_record<W: Write>(wtr: &mut csv::Writer<W>, rec: &BenchRecord) -> Result<()> {
    wtr.serialize(rec)?;
    wtr.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub loss: LossKind,
    #[serde(rename = "L")]
    pub num_logits: usize,
    pub m: f64,
    pub reps: usize,
    pub mean_wall_time_s: f64,
    pub min_wall_time_s: f64,
    pub mean_diff_ops: f64,
}

/// Reference-over-bucketed ratios for one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub reference: LossKind,
    pub bucketed: LossKind,
    #[serde(rename = "L")]
    pub num_logits: usize,
    pub m: f64,
    pub wall_time_speedup: f64,
    pub diff_ops_ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenarios: Vec<ScenarioSummary>,
    pub speedups: Vec<Speedup>,
}

impl Summary {
    pub fn speedup(&self, bucketed: LossKind, num_logits: usize, m: f64) -> Option<&Speedup> {
        self.speedups
            .iter()
            .find(|s| s.bucketed == bucketed && s.num_logits == num_logits && s.m == m)
    }

    pub fn scenario(&self, loss: LossKind, num_logits: usize, m: f64) -> Option<&ScenarioSummary> {
        self.scenarios
            .iter()
            .find(|s| s.loss == loss && s.num_logits == num_logits && s.m == m)
    }
}

/// Mean and min wall time per `(loss, L, m)`, and speedups for every
/// bucketed kind whose reference kind was also measured.
pub fn summarize(records: &[BenchRecord]) -> Summary {
    let mut summary = Summary::default();
    for rec in records {
        if summary.scenario(rec.loss, rec.num_logits, rec.m).is_some() {
            continue;
        }
        let group: Vec<&BenchRecord> = records
            .iter()
            .filter(|r| r.loss == rec.loss && r.num_logits == rec.num_logits && r.m == rec.m)
            .collect();
        let n = group.len() as f64;
        summary.scenarios.push(ScenarioSummary {
            loss: rec.loss,
            num_logits: rec.num_logits,
            m: rec.m,
            reps: group.len(),
            mean_wall_time_s: group.iter().map(|r| r.wall_time_s).sum::<f64>() / n,
            min_wall_time_s: group
                .iter()
                .map(|r| r.wall_time_s)
                .fold(f64::INFINITY, f64::min),
            mean_diff_ops: group.iter().map(|r| r.diff_ops as f64).sum::<f64>() / n,
        });
    }
    for s in &summary.scenarios {
        let Some(reference) = s.loss.reference_of() else {
            continue;
        };
        if let Some(r) = summary.scenario(reference, s.num_logits, s.m) {
            summary.speedups.push(Speedup {
                reference,
                bucketed: s.loss,
                num_logits: s.num_logits,
                m: s.m,
                wall_time_speedup: r.mean_wall_time_s / s.mean_wall_time_s,
                diff_ops_ratio: r.mean_diff_ops / s.mean_diff_ops.max(1.0),
            });
        }
    }
    summary
}
