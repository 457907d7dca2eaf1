//! Atom tables, lexical similarity, labeled pair generation and splitting.

mod atoms;
mod pairs;
mod split;
mod synth;
mod words;

pub use atoms::{parse_atom_table, read_atom_table, write_atom_table, Atom, AtomTable};
pub use pairs::{
    generate_pairs, read_pair_set, sidecar_path, write_pair_set, AtomPair, NegativeMode,
    PairConfig, PairSet, Provenance, SplitRecord, DEFAULT_MAX_CONCEPT_ATOMS,
};
pub use split::{split_pairs, split_pairs_by_atom, SplitFractions};
pub use synth::{synth_literature, synth_vocabulary, NoiseConfig, SynthConfig};
pub use words::{jaccard, jaccard_text, normalize_words, WordSet};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate AUI {aui} at line {line}")]
    DuplicateAui { aui: String, line: usize },
    #[error("line {line}: expected 4 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: empty {field}")]
    EmptyField { line: usize, field: &'static str },
    #[error("atom table is empty")]
    EmptyTable,
    #[error("negative ratio must be positive, got {0}")]
    InvalidNegRatio(f64),
    #[error("requested {requested} negative pairs but at most {available} are available")]
    NotEnoughNegatives { requested: u128, available: u128 },
    #[error("invalid split fractions {0:?}: each must be positive and they must sum to 1")]
    InvalidFractions([f64; 3]),
    #[error("invalid stratum weights: {0}")]
    InvalidStrata(String),
    #[error("invalid synthesis config: {0}")]
    InvalidSynth(String),
    #[error("line {line}: malformed pair record: {reason}")]
    MalformedPair { line: usize, reason: String },
    #[error("unknown AUI {0}")]
    UnknownAui(String),
    #[error("invalid pair sidecar: {0}")]
    Sidecar(String),
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}
