use serde::{Deserialize, Serialize};

use super::{EvalError, PredictionSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn add(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn merge(self, other: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn from_predictions(preds: &PredictionSet) -> Confusion {
        let mut c = Confusion::default();
        for (i, p) in preds.records.iter().enumerate() {
            c.add(p.label, preds.predicted(i));
        }
        c
    }
}

/// Rates derived from a confusion table. A rate whose denominator is zero
/// is reported as 0 with its `*_defined` flag cleared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub total: u64,
    #[serde(flatten)]
    pub counts: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub f1_defined: bool,
    pub accuracy_defined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

impl MetricsReport {
    pub fn from_confusion(c: Confusion, threshold: f64) -> Self {
        let (precision, precision_defined) = ratio(c.tp, c.tp + c.fp);
        let (recall, recall_defined) = ratio(c.tp, c.tp + c.fn_);
        // 2PR/(P+R) reduces to 2TP/(2TP+FP+FN); P+R vanishes exactly when TP does
        let f1_defined = precision_defined && recall_defined && c.tp > 0;
        let f1 = if f1_defined { ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_).0 } else { 0.0 };
        let (accuracy, accuracy_defined) = ratio(c.tp + c.tn, c.total());
        Self {
            threshold,
            total: c.total(),
            counts: c,
            precision,
            recall,
            f1,
            accuracy,
            precision_defined,
            recall_defined,
            f1_defined,
            accuracy_defined,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let flag = |d: bool| if d { "" } else { " (undefined)" };
        let rows = [
            ("threshold", format!("{:.4}", self.threshold)),
            ("pairs", self.total.to_string()),
            ("tp", self.counts.tp.to_string()),
            ("fp", self.counts.fp.to_string()),
            ("tn", self.counts.tn.to_string()),
            ("fn", self.counts.fn_.to_string()),
            ("precision", format!("{:.4}{}", self.precision, flag(self.precision_defined))),
            ("recall", format!("{:.4}{}", self.recall, flag(self.recall_defined))),
            ("f1", format!("{:.4}{}", self.f1, flag(self.f1_defined))),
            ("accuracy", format!("{:.4}{}", self.accuracy, flag(self.accuracy_defined))),
        ];
        rows.iter().map(|(k, v)| format!("{k:<10} {v}\n")).collect()
    }
}

pub fn compute_metrics(preds: &PredictionSet) -> Result<MetricsReport, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(MetricsReport::from_confusion(Confusion::from_predictions(preds), preds.threshold))
}
