//! Pair classification, confusion metrics, Jaccard-binned breakdowns,
//! McNemar comparisons and the Jaccard-threshold baseline.

mod baseline;
mod bins;
mod classify;
mod mcnemar;
mod metrics;
mod predictions;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use baseline::{jaccard_baseline, sweep_jaccard_threshold, SweepResult, SWEEP_STEPS};
pub use bins::{bin_by_jaccard, bin_index, BinEntry, BinReport, NUM_BINS};
pub use classify::{classify_pairs, ClassifyOptions};
pub use mcnemar::{contingency_table, mcnemar, mcnemar_from_table, McNemarResult};
pub use metrics::{compute_metrics, Confusion, MetricsReport};
pub use predictions::{read_predictions, write_predictions, Prediction, PredictionSet, DEFAULT_THRESHOLD};

use crate::corpus::CorpusError;
use crate::model::ModelError;
use crate::tokenizer::TokenizerError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to score")]
    Empty,
    #[error("unknown AUI {0}")]
    UnknownAui(String),
    #[error("prediction sets diverge at pair {0}")]
    KeyMismatch(String),
    #[error("prediction sets disagree on the true label of pair {0}")]
    LabelMismatch(String),
    #[error("duplicate pair {0} in prediction set")]
    DuplicateKey(String),
    #[error("model vocabulary size {model} does not match tokenizer vocabulary size {vocab}")]
    VocabMismatch { model: usize, vocab: usize },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("{path} line {line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl EvalError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
