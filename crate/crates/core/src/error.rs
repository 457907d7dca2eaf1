use thiserror::Error;

use crate::corpus::CorpusError;
use crate::evaluation::EvalError;
use crate::model::ModelError;
use crate::tokenizer::TokenizerError;
use crate::training::TrainingError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for callers that drive several stages of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
