//! Scoring: confusion counts, per-class precision/recall/F1, overall
//! accuracy, and fixed-width report tables with a machine-readable CSV
//! twin.

use thiserror::Error;

use crate::corpus::Label;
use crate::features::FeatureKind;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction/truth length mismatch: {predictions} vs {truths}")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("cannot score an empty prediction set")]
    Empty,
}

/// Per-class confusion counts over utterances, treating each class in
/// turn as the positive one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub normal: ClassCounts,
    pub whisper: ClassCounts,
    pub total: usize,
}

impl ConfusionCounts {
    pub fn class(&self, label: Label) -> &ClassCounts {
        match label {
            Label::Normal => &self.normal,
            Label::Whisper => &self.whisper,
        }
    }

    pub fn correct(&self) -> usize {
        self.normal.tp + self.whisper.tp
    }
}

/// Count per-class TP/FP/FN/TN from aligned prediction and truth lists.
pub fn confusion(predictions: &[Label], truths: &[Label]) -> Result<ConfusionCounts, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts = [ClassCounts {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    }; 2];
    for (&p, &t) in predictions.iter().zip(truths) {
        for (i, c) in counts.iter_mut().enumerate() {
            let positive = Label::from_index(i);
            match (p == positive, t == positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(ConfusionCounts {
        normal: counts[0],
        whisper: counts[1],
        total: predictions.len(),
    })
}

/// Precision, recall, F1 for one class. `degenerate` flags any metric
/// that came from a 0/0 division and was reported as 0.0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

impl ClassMetrics {
    fn from_counts(c: &ClassCounts) -> Self {
        let mut degenerate = false;
        let mut ratio = |num: usize, den: usize| {
            if den == 0 {
                degenerate = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            degenerate = true;
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            degenerate,
        }
    }
}

/// One results row: per-class metrics plus overall accuracy, tagged with
/// enough metadata to be self-describing in QSE/QCSE comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub feature: FeatureKind,
    pub radius: f64,
    pub snr_db: Option<f64>,
    pub dataset: String,
    pub normal: ClassMetrics,
    pub whisper: ClassMetrics,
    pub accuracy: f64,
}

impl MetricsReport {
    pub fn class(&self, label: Label) -> &ClassMetrics {
        match label {
            Label::Normal => &self.normal,
            Label::Whisper => &self.whisper,
        }
    }
}

/// Metadata attached to a report row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub feature: FeatureKind,
    pub radius: f64,
    pub snr_db: Option<f64>,
    pub dataset: String,
}

/// Turn confusion counts into a metrics report. Degenerate divisions
/// (no predicted positives, no true positives at all) yield 0.0 with the
/// class's `degenerate` flag set, so tables always render.
pub fn metrics(c: &ConfusionCounts, meta: &ReportMeta) -> MetricsReport {
    MetricsReport {
        feature: meta.feature,
        radius: meta.radius,
        snr_db: meta.snr_db,
        dataset: meta.dataset.clone(),
        normal: ClassMetrics::from_counts(&c.normal),
        whisper: ClassMetrics::from_counts(&c.whisper),
        accuracy: c.correct() as f64 / c.total as f64,
    }
}

fn snr_text(snr_db: Option<f64>) -> String {
    match snr_db {
        Some(v) => format!("{v:.1}"),
        None => "clean".to_string(),
    }
}

/// Fixed-width text table, one row per report, four decimal places.
/// Degenerate metrics are marked with `*`.
pub fn render_report(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>7} {:>8} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7} | {:>7}\n",
        "feature", "radius", "snr_db", "n_pre", "n_re", "n_f1", "w_pre", "w_re", "w_f1", "acc"
    ));
    out.push_str(&format!("{}\n", "-".repeat(96)));
    for r in reports {
        let cell = |m: f64, degenerate: bool| {
            if degenerate {
                format!("{m:.4}*")
            } else {
                format!("{m:.4}")
            }
        };
        out.push_str(&format!(
            "{:<14} {:>7.3} {:>8} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7} | {:>7}\n",
            r.dataset,
            r.radius,
            snr_text(r.snr_db),
            cell(r.normal.precision, r.normal.degenerate),
            cell(r.normal.recall, r.normal.degenerate),
            cell(r.normal.f1, r.normal.degenerate),
            cell(r.whisper.precision, r.whisper.degenerate),
            cell(r.whisper.recall, r.whisper.degenerate),
            cell(r.whisper.f1, r.whisper.degenerate),
            format!("{:.4}", r.accuracy),
        ));
    }
    out
}

/// Machine-readable CSV: one row per (report, class), accuracy repeated
/// on each class row. The `snr_db` field is empty for clean runs.
pub fn render_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("feature,radius,snr_db,class,precision,recall,f1,accuracy\n");
    for r in reports {
        for label in [Label::Normal, Label::Whisper] {
            let m = r.class(label);
            out.push_str(&format!(
                "{},{},{},{},{:.4},{:.4},{:.4},{:.4}\n",
                r.feature.name(),
                r.radius,
                r.snr_db.map(|v| v.to_string()).unwrap_or_default(),
                label.name(),
                m.precision,
                m.recall,
                m.f1,
                r.accuracy,
            ));
        }
    }
    out
}
