//! Python bindings: `compute` and `generate` on plain numeric sequences.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rankbucket::{DetectionSet, Label, LossKind, ReferenceConfig, SyntheticConfig};

fn value_error(e: rankbucket::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Loss, its two components and per-logit gradients in input order.
#[pyclass(frozen, get_all, module = "rankbucket_py")]
#[derive(Debug)]
pub struct BindingResult {
    pub loss: f64,
    pub ranking: f64,
    pub sorting: f64,
    pub grads: Vec<f64>,
}

#[pymethods]
impl BindingResult {
    fn __repr__(&self) -> String {
        format!(
            "BindingResult(loss={}, ranking={}, sorting={}, grads=<{} values>)",
            self.loss,
            self.ranking,
            self.sorting,
            self.grads.len()
        )
    }
}

/// Builds a set from parallel arrays. IoU entries at negative indices are
/// placeholders and ignored.
pub fn detection_set(
    scores: Vec<f64>,
    labels: &[i64],
    ious: &[f64],
    delta: f64,
) -> PyResult<DetectionSet> {
    let n = scores.len();
    for (what, got) in [("labels", labels.len()), ("ious", ious.len())] {
        if got != n {
            return Err(value_error(rankbucket::Error::LengthMismatch {
                what,
                got,
                expected: n,
            }));
        }
    }
    let mut ls = Vec::with_capacity(n);
    let mut is = Vec::with_capacity(n);
    for (i, (&l, &iou)) in labels.iter().zip(ious).enumerate() {
        match l {
            0 => {
                ls.push(Label::Negative);
                is.push(None);
            }
            1 => {
                ls.push(Label::Positive);
                is.push(Some(iou));
            }
            _ => {
                return Err(PyValueError::new_err(format!(
                    "label at index {i} must be 0 or 1, got {l}"
                )))
            }
        }
    }
    DetectionSet::new(scores, ls, is, delta).map_err(value_error)
}

/// compute(scores, labels, ious, delta, kind, discard_trivial=True)
///
/// `kind` is one of ap, rs, bap, brs, oracle-ap, oracle-rs.
#[pyfunction]
#[pyo3(signature = (scores, labels, ious, delta, kind, discard_trivial = true))]
fn compute(
    py: Python<'_>,
    scores: Vec<f64>,
    labels: Vec<i64>,
    ious: Vec<f64>,
    delta: f64,
    kind: &str,
    discard_trivial: bool,
) -> PyResult<BindingResult> {
    let kind: LossKind = kind.parse().map_err(value_error)?;
    let set = detection_set(scores, &labels, &ious, delta)?;
    let cfg = ReferenceConfig { discard_trivial };
    let (r, _) = py
        .detach(|| rankbucket::evaluate(kind, &set, cfg))
        .map_err(value_error)?;
    Ok(BindingResult {
        loss: r.loss,
        ranking: r.ranking_component,
        sorting: r.sorting_component,
        grads: r.grads,
    })
}

/// generate(L, m, seed) -> (scores, labels, ious)
///
/// Negatives carry NaN in `ious`.
#[pyfunction]
#[pyo3(name = "generate", signature = (num_logits, positive_pct, seed))]
fn generate_py(
    py: Python<'_>,
    num_logits: usize,
    positive_pct: f64,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<i64>, Vec<f64>)> {
    let cfg = SyntheticConfig::new(num_logits, positive_pct, seed);
    let set = py
        .detach(|| rankbucket::generate(&cfg))
        .map_err(value_error)?;
    let labels = set
        .labels()
        .iter()
        .map(|l| l.is_positive() as i64)
        .collect();
    let ious = set.ious().iter().map(|i| i.unwrap_or(f64::NAN)).collect();
    Ok((set.scores().to_vec(), labels, ious))
}

#[pymodule]
fn rankbucket_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add(
        "LOSS_KINDS",
        LossKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>(),
    )?;
    m.add_class::<BindingResult>()?;
    m.add_function(wrap_pyfunction!(compute, m)?)?;
    m.add_function(wrap_pyfunction!(generate_py, m)?)?;
    Ok(())
}
