use serde::{Deserialize, Serialize};

use super::{compute_metrics, EvalError, MetricsReport, Prediction, PredictionSet};
use crate::corpus::{jaccard, normalize_words, AtomTable, PairSet};

/// Thresholds `0/20, 1/20, ..., 20/20`.
pub const SWEEP_STEPS: usize = 20;

/// Scores each pair by word-set Jaccard similarity.
pub fn jaccard_baseline(atoms: &AtomTable, pairs: &PairSet, threshold: f64) -> Result<PredictionSet, EvalError> {
    let mut records = Vec::with_capacity(pairs.len());
    for p in &pairs.pairs {
        let t1 = atoms.get(&p.aui1).ok_or_else(|| EvalError::UnknownAui(p.aui1.clone()))?;
        let t2 = atoms.get(&p.aui2).ok_or_else(|| EvalError::UnknownAui(p.aui2.clone()))?;
        records.push(Prediction {
            aui1: p.aui1.clone(),
            aui2: p.aui2.clone(),
            label: p.synonym,
            prob: jaccard(&normalize_words(&t1.text), &normalize_words(&t2.text)),
        });
    }
    PredictionSet::new(records, threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub threshold: f64,
    pub metrics: MetricsReport,
    /// F1 at every swept threshold, in sweep order.
    pub curve: Vec<(f64, f64)>,
}

/// Best-F1 threshold on `pairs`; the lowest threshold wins ties.
pub fn sweep_jaccard_threshold(atoms: &AtomTable, pairs: &PairSet) -> Result<SweepResult, EvalError> {
    let scored = jaccard_baseline(atoms, pairs, 0.0)?;
    let mut best: Option<(f64, MetricsReport)> = None;
    let mut curve = Vec::with_capacity(SWEEP_STEPS + 1);
    for i in 0..=SWEEP_STEPS {
        let t = i as f64 / SWEEP_STEPS as f64;
        let m = compute_metrics(&scored.with_threshold(t))?;
        curve.push((t, m.f1));
        if best.as_ref().is_none_or(|(_, b)| m.f1 > b.f1) {
            best = Some((t, m));
        }
    }
    let (threshold, metrics) = best.expect("at least one threshold");
    Ok(SweepResult {
        threshold,
        metrics,
        curve,
    })
}
