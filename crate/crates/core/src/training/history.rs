use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MlmBudget, TrainingError, Variant};
use crate::evaluation::MetricsReport;

pub const HISTORY_FILE: &str = "history.jsonl";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Mlm,
    Sp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    /// 1-based within the phase.
    pub epoch: u32,
    pub steps: u64,
    pub mean_loss: f64,
    pub seq_len: usize,
    pub dev: Option<MetricsReport>,
    pub checkpoint: Option<String>,
}

/// Everything a run records: per-epoch lines plus run-level facts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub variant: Variant,
    pub seed: u64,
    pub init_checkpoint: Option<PathBuf>,
    pub mlm_budget: Option<MlmBudget>,
    pub mlm_seq_len: Option<usize>,
    pub sp_seq_len: usize,
    pub best_epoch: Option<u32>,
    pub best_dev_f1: Option<f64>,
    #[serde(skip)]
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn sp_records(&self) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter(|r| r.phase == Phase::Sp)
    }

    /// Highest dev F1 among SP epochs; the earliest epoch wins ties.
    pub fn select_best(&self) -> Option<&EpochRecord> {
        let mut best: Option<&EpochRecord> = None;
        for r in self.sp_records() {
            let f1 = r.dev.as_ref().map_or(0.0, |m| m.f1);
            if best.is_none_or(|b| f1 > b.dev.as_ref().map_or(0.0, |m| m.f1)) {
                best = Some(r);
            }
        }
        best
    }

    pub fn records_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<(), TrainingError> {
        let write = |name: &str, content: String| {
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(|source| TrainingError::Io { path, source })
        };
        write(HISTORY_FILE, self.records_jsonl())?;
        let mut run = serde_json::to_string_pretty(self).expect("history serializes");
        run.push('\n');
        write(RUN_FILE, run)
    }

    pub fn load(dir: &Path) -> Result<Self, TrainingError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| TrainingError::Io { path, source })
        };
        let bad = |e: serde_json::Error| TrainingError::InvalidSchedule(format!("history: {e}"));
        let mut history: TrainingHistory = serde_json::from_str(&read(RUN_FILE)?).map_err(bad)?;
        history.records = read(HISTORY_FILE)?
            .lines()
            .filter(|l| !l.is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(bad)?;
        Ok(history)
    }
}
