//! Pretraining schedules: SP only, MLM then SP, or SP from a checkpoint.

mod epoch;
mod history;
mod run;
mod schedule;

use std::path::PathBuf;

use thiserror::Error;

pub use epoch::{encode_mlm_corpus, encode_sp_examples, train_epoch_mlm, train_epoch_sp, SpExample, Trainer};
pub use history::{EpochRecord, Phase, TrainingHistory, HISTORY_FILE, RUN_FILE};
pub use run::{checkpoint_name, run_schedule, MlmData, RunOutput, TrainingData, BEST_CHECKPOINT, MLM_FINAL};
pub use schedule::{MlmBudget, MlmCorpus, OptimizerSettings, Schedule, Variant};

use crate::corpus::CorpusError;
use crate::evaluation::EvalError;
use crate::model::ModelError;
use crate::tokenizer::TokenizerError;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("mlm corpus required for {0}")]
    MissingCorpus(Variant),
    #[error("init checkpoint required for variant init")]
    MissingInitCheckpoint,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("no training examples")]
    EmptyData,
    #[error("no dev pairs to select a checkpoint with")]
    EmptyDev,
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
    Eval(#[from] EvalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}
