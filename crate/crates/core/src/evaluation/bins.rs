use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Confusion, EvalError, MetricsReport, PredictionSet};
use crate::corpus::{jaccard_text, AtomTable};

pub const NUM_BINS: usize = 10;

/// `[0, 0.1), ..., [0.8, 0.9), [0.9, 1.0]`.
pub fn bin_index(jaccard: f64) -> usize {
    ((jaccard * NUM_BINS as f64).floor().max(0.0) as usize).min(NUM_BINS - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEntry {
    pub bin: usize,
    pub low: f64,
    pub high: f64,
    pub count: u64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub threshold: f64,
    pub bins: Vec<BinEntry>,
    pub overall: MetricsReport,
}

pub fn bin_by_jaccard(preds: &PredictionSet, atoms: &AtomTable) -> Result<BinReport, EvalError> {
    let mut counts = [Confusion::default(); NUM_BINS];
    for (i, p) in preds.records.iter().enumerate() {
        let t1 = atoms.get(&p.aui1).ok_or_else(|| EvalError::UnknownAui(p.aui1.clone()))?;
        let t2 = atoms.get(&p.aui2).ok_or_else(|| EvalError::UnknownAui(p.aui2.clone()))?;
        counts[bin_index(jaccard_text(&t1.text, &t2.text))].add(p.label, preds.predicted(i));
    }
    let bins = counts
        .iter()
        .enumerate()
        .map(|(b, c)| BinEntry {
            bin: b,
            low: b as f64 / NUM_BINS as f64,
            high: (b + 1) as f64 / NUM_BINS as f64,
            count: c.total(),
            metrics: MetricsReport::from_confusion(*c, preds.threshold),
        })
        .collect();
    let overall = counts.iter().fold(Confusion::default(), |a, &c| a.merge(c));
    Ok(BinReport {
        threshold: preds.threshold,
        bins,
        overall: MetricsReport::from_confusion(overall, preds.threshold),
    })
}

impl BinReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bins serialize");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count,precision,recall,f1,accuracy\n");
        for b in &self.bins {
            let m = &b.metrics;
            writeln!(
                out,
                "{:.1},{:.1},{},{:.6},{:.6},{:.6},{:.6}",
                b.low, b.high, b.count, m.precision, m.recall, m.f1, m.accuracy
            )
            .expect("string write");
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<11} {:>8} {:>9} {:>9} {:>9} {:>9}\n",
            "jaccard", "count", "precision", "recall", "f1", "accuracy"
        );
        for b in &self.bins {
            let m = &b.metrics;
            let close = if b.bin + 1 == NUM_BINS { ']' } else { ')' };
            writeln!(
                out,
                "[{:.1}, {:.1}{} {:>8} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                b.low, b.high, close, b.count, m.precision, m.recall, m.f1, m.accuracy
            )
            .expect("string write");
        }
        let m = &self.overall;
        writeln!(
            out,
            "{:<11} {:>8} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            "all", m.total, m.precision, m.recall, m.f1, m.accuracy
        )
        .expect("string write");
        out
    }
}
