use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bucketed::{bap_loss_grad, brs_loss_grad, OpCounters};
use crate::error::{Error, Result};
use crate::model::{DetectionSet, GradResult};
use crate::oracle::{OracleKind, PairwiseOracleState};
use crate::reference::{ap_loss_grad_counted, rs_loss_grad_counted, ReferenceConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Ap,
    Rs,
    Bap,
    Brs,
    OracleAp,
    OracleRs,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Ap,
        LossKind::Rs,
        LossKind::Bap,
        LossKind::Brs,
        LossKind::OracleAp,
        LossKind::OracleRs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ap => "ap",
            LossKind::Rs => "rs",
            LossKind::Bap => "bap",
            LossKind::Brs => "brs",
            LossKind::OracleAp => "oracle-ap",
            LossKind::OracleRs => "oracle-rs",
        }
    }

    pub fn is_oracle(self) -> bool {
        matches!(self, LossKind::OracleAp | LossKind::OracleRs)
    }

    /// The unbucketed loss a bucketed kind reproduces.
    pub fn reference_of(self) -> Option<LossKind> {
        match self {
            LossKind::Bap => Some(LossKind::Ap),
            LossKind::Brs => Some(LossKind::Rs),
            _ => None,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownLoss(s.to_string()))
    }
}

/// Evaluates one loss with gradients. `cfg` only affects the reference kinds.
pub fn evaluate(
    kind: LossKind,
    set: &DetectionSet,
    cfg: ReferenceConfig,
) -> Result<(GradResult, OpCounters)> {
    Ok(match kind {
        LossKind::Ap => ap_loss_grad_counted(set, cfg),
        LossKind::Rs => rs_loss_grad_counted(set, cfg),
        LossKind::Bap => bap_loss_grad(set),
        LossKind::Brs => brs_loss_grad(set),
        LossKind::OracleAp | LossKind::OracleRs => {
            let oracle_kind = if kind == LossKind::OracleAp {
                OracleKind::Ap
            } else {
                OracleKind::Rs
            };
            let state = PairwiseOracleState::build(set, oracle_kind)?;
            let n = set.len() as u64;
            let ops = OpCounters {
                diff_ops: n * n,
                sort_ops: 0,
                total_ops: 3 * n * n,
            };
            (state.grad_result(set), ops)
        }
    })
}
