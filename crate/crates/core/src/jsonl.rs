//! JSONL exchange format: one `{"score", "label", "iou"}` object per logit,
//! optionally preceded by a `{"meta": ...}` header line. The smoothing
//! width is not stored in the file.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DetectionSet, Label};
use crate::synthetic::GeneratorMetadata;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub score: f64,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header<M> {
    meta: M,
}

pub fn write_set<W: Write>(
    mut w: W,
    set: &DetectionSet,
    meta: Option<&GeneratorMetadata>,
) -> Result<()> {
    if let Some(meta) = meta {
        serde_json::to_writer(&mut w, &Header { meta })?;
        w.write_all(b"\n")?;
    }
    for ((&score, label), &iou) in set.scores().iter().zip(set.labels()).zip(set.ious()) {
        let rec = Record {
            score,
            label: label.is_positive() as u8,
            iou,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a set, attaching smoothing width `delta`. Errors name the 1-based
/// line they occur on.
pub fn read_set<R: BufRead>(r: R, delta: f64) -> Result<(DetectionSet, Option<serde_json::Value>)> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut ious = Vec::new();
    let mut meta = None;
    for (k, line) in r.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if scores.is_empty() && meta.is_none() && text.starts_with("{\"meta\"") {
            let header: Header<serde_json::Value> =
                serde_json::from_str(text).map_err(|e| parse_err(line_no, e.to_string()))?;
            meta = Some(header.meta);
            continue;
        }
        let rec: Record =
            serde_json::from_str(text).map_err(|e| parse_err(line_no, e.to_string()))?;
        let label = match (rec.label, rec.iou) {
            (1, Some(iou)) if (0.0..=1.0).contains(&iou) => Label::Positive,
            (1, Some(iou)) => return Err(parse_err(line_no, format!("iou {iou} outside [0, 1]"))),
            (1, None) => return Err(parse_err(line_no, "positive record lacks `iou`".into())),
            (0, None) => Label::Negative,
            (0, Some(_)) => return Err(parse_err(line_no, "negative record carries `iou`".into())),
            (l, _) => return Err(parse_err(line_no, format!("label must be 0 or 1, got {l}"))),
        };
        if !rec.score.is_finite() {
            return Err(parse_err(line_no, "score is not finite".into()));
        }
        scores.push(rec.score);
        labels.push(label);
        ious.push(rec.iou);
    }
    Ok((DetectionSet::new(scores, labels, ious, delta)?, meta))
}

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticConfig};

    #[test]
    fn round_trip_with_header() {
        let cfg = SyntheticConfig::new(500, 5.0, 11);
        let set = generate(&cfg).unwrap();
        let mut buf = Vec::new();
        write_set(&mut buf, &set, Some(&GeneratorMetadata::new(&cfg))).unwrap();
        let (back, meta) = read_set(buf.as_slice(), set.delta()).unwrap();
        assert_eq!(back, set);
        assert_eq!(meta.unwrap()["seed"], 11);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "{\"score\":1.0,\"label\":0}\n{\"score\":0.5,\"label\":1}\n";
        match read_set(text.as_bytes(), 0.5) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let text = "{\"score\":1.0,\"label\":0}\n\nnot json\n";
        match read_set(text.as_bytes(), 0.5) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "{\"score\":1.0,\"label\":2}\n";
        assert!(matches!(
            read_set(text.as_bytes(), 0.5),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn record_layout() {
        let set = DetectionSet::from_pairs(&[(0.25, Some(0.5)), (-1.0, None)], 0.5).unwrap();
        let mut buf = Vec::new();
        write_set(&mut buf, &set, None).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"score\":0.25,\"label\":1,\"iou\":0.5}\n{\"score\":-1.0,\"label\":0}\n"
        );
    }
}
