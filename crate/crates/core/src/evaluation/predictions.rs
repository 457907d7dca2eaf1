use std::fmt::Write as _;
use std::path::Path;

use super::EvalError;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

const HEADER: &str = "AUI1\tAUI2\tTRUE_LABEL\tPROB";

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub aui1: String,
    pub aui2: String,
    pub label: bool,
    pub prob: f64,
}

impl Prediction {
    pub fn key(&self) -> String {
        format!("{}|{}", self.aui1, self.aui2)
    }
}

/// Scored pairs plus the threshold that turns scores into labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub records: Vec<Prediction>,
    pub threshold: f64,
}

impl PredictionSet {
    pub fn new(records: Vec<Prediction>, threshold: f64) -> Result<Self, EvalError> {
        if let Some(p) = records.iter().find(|p| !(0.0..=1.0).contains(&p.prob)) {
            return Err(EvalError::BadProbability(p.prob));
        }
        Ok(Self { records, threshold })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Predicted synonymy; the boundary counts as synonym.
    pub fn predicted(&self, i: usize) -> bool {
        self.records[i].prob >= self.threshold
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Self {
            records: self.records.clone(),
            threshold,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 40 + HEADER.len() + 1);
        out.push_str(HEADER);
        out.push('\n');
        for p in &self.records {
            writeln!(out, "{}\t{}\t{}\t{:.9}", p.aui1, p.aui2, u8::from(p.label), p.prob).expect("string write");
        }
        out
    }
}

pub fn write_predictions(set: &PredictionSet, path: &Path) -> Result<(), EvalError> {
    std::fs::write(path, set.to_tsv()).map_err(|e| EvalError::io(path, e))
}

pub fn read_predictions(path: &Path, threshold: f64) -> Result<PredictionSet, EvalError> {
    let content = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
    let parse_err = |line: usize, reason: String| EvalError::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut records = Vec::new();
    for (idx, row) in content.lines().enumerate() {
        if row.is_empty() || (idx == 0 && row == HEADER) {
            continue;
        }
        let f: Vec<&str> = row.split('\t').collect();
        if f.len() != 4 {
            return Err(parse_err(idx + 1, format!("expected 4 fields, found {}", f.len())));
        }
        let label = match f[2] {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(idx + 1, format!("label must be 0 or 1, got {other:?}"))),
        };
        let prob: f64 = f[3]
            .parse()
            .map_err(|_| parse_err(idx + 1, format!("bad probability {:?}", f[3])))?;
        records.push(Prediction {
            aui1: f[0].to_string(),
            aui2: f[1].to_string(),
            label,
            prob,
        });
    }
    PredictionSet::new(records, threshold)
}
