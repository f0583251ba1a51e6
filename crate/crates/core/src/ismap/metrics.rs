//! Confusion counts and the four derived scores.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts with non-map taken as the positive class.
    pub fn swapped(&self) -> Self {
        ConfusionCounts { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }

    /// Tally predictions for known positives and known negatives.
    pub fn tally(positives: &[bool], negatives: &[bool]) -> Self {
        let hits = |v: &[bool]| v.iter().filter(|&&b| b).count() as u64;
        let tp = hits(positives);
        let fp = hits(negatives);
        ConfusionCounts { tp, fp, fn_: positives.len() as u64 - tp, tn: negatives.len() as u64 - fp }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    /// Metrics whose denominator was zero; their value is reported as 0.
    pub undefined: Vec<String>,
}

fn ratio(num: f64, den: f64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num / den
    }
}

/// Harmonic mean of precision and recall; `None` when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let s = precision + recall;
    (s > 0.0).then(|| 2.0 * precision * recall / s)
}

pub fn metrics(c: ConfusionCounts) -> EvalReport {
    let mut undefined = Vec::new();
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let precision = ratio(tp, tp + fp, "precision", &mut undefined);
    let recall = ratio(tp, tp + fn_, "recall", &mut undefined);
    let accuracy = ratio(tp + tn, tp + fp + fn_ + tn, "accuracy", &mut undefined);
    let f1 = f1_score(precision, recall).unwrap_or_else(|| {
        undefined.push("f1".into());
        0.0
    });
    EvalReport { counts: c, precision, recall, accuracy, f1, undefined }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Metrics as rows, one column per labelled report.
pub fn format_table(columns: &[(&str, &EvalReport)]) -> String {
    let rows: [(&str, fn(&EvalReport) -> f64); 4] = [
        ("Precision", |r| r.precision),
        ("Recall", |r| r.recall),
        ("Accuracy", |r| r.accuracy),
        ("F1-Score", |r| r.f1),
    ];
    let width = columns.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<10}", "Data");
    for (label, _) in columns {
        let _ = write!(out, " | {label:>width$}");
    }
    out.push('\n');
    out.push_str(&"-".repeat(10 + columns.len() * (width + 3)));
    out.push('\n');
    for (name, get) in rows {
        let _ = write!(out, "{name:<10}");
        for (_, r) in columns {
            let _ = write!(out, " | {:>width$.3}", get(r));
        }
        out.push('\n');
    }
    out
}
