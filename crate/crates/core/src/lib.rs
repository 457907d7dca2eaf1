//! Synonymy prediction for concept-clustered term vocabularies.
//!
//! The crate covers the whole pipeline: building labeled term pairs from an
//! atom table, training a WordPiece vocabulary, training a small transformer
//! encoder with masked-language-model and synonymy-prediction objectives, and
//! evaluating classifiers with precision/recall/F1, similarity-binned
//! breakdowns and McNemar's test.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod rng;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
