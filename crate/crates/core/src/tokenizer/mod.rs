//! WordPiece vocabulary training, greedy encoding, input packing and
//! masked-language-model corruption.

mod basic;
mod masking;
mod sequence;
mod train;
mod vocab;

pub use basic::basic_tokenize;
pub use masking::{apply_mlm_masking, apply_mlm_masking_with, MaskedBatch, MASK_PROB};
pub use sequence::{build_mlm_input, build_sp_input, TokenSequence};
pub use train::{count_words, count_words_parallel, train_wordpiece, train_wordpiece_from_counts, WordPieceTrainer};
pub use vocab::{
    WordPieceVocab, CLS_ID, CONTINUATION_PREFIX, DEFAULT_MAX_WORD_CHARS, MASK_ID, NUM_SPECIAL,
    PAD_ID, SEP_ID, SPECIAL_TOKENS, UNK_ID,
};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("tokenizer corpus is empty")]
    EmptyCorpus,
    #[error("vocab_size {requested} is too small; the minimum for this corpus is {minimum}")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("malformed vocabulary: {0}")]
    MalformedVocab(String),
    #[error("max_len {max_len} is below the minimum of {minimum}")]
    MaxLenTooSmall { max_len: usize, minimum: usize },
}
