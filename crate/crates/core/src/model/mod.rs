//! Transformer encoder with masked-LM and synonymy heads.

mod checkpoint;
mod config;
mod encoder;
mod heads;
mod optim;
mod params;
mod scalar;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Metadata, ModelCheckpoint, FORMAT_VERSION, MAGIC};
pub use config::{ArrayKind, ArraySpec, ClsPooling, ModelConfig};
pub use encoder::Mode;
pub use heads::{
    accumulate_mlm, accumulate_sp, backward_mlm, backward_sp, forward_mlm, forward_sp, mlm_loss, sp_loss,
    MlmForward, MlmTarget, SpForward, PROB_FLOOR,
};
pub use optim::{optimizer_step, AdamConfig, AdamState, LinearSchedule};
pub use params::{init_params, EncoderLayer, Gradients, Linear, ModelParams, Norm, INIT_STD};
pub use scalar::Scalar;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds max positions {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("no MLM targets")]
    NoMlmTargets,
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("non-finite parameter in {0} after update")]
    NonFiniteParameter(String),
    #[error("{0}")]
    Incompatible(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ModelError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
