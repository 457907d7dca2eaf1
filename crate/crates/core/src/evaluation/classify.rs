use rayon::prelude::*;

use super::{EvalError, Prediction, PredictionSet};
use crate::corpus::{AtomTable, PairSet};
use crate::model::{forward_sp, Mode, ModelParams};
use crate::tokenizer::{build_sp_input, WordPieceVocab};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub threshold: f64,
    pub max_len: usize,
    /// Pairs per forward pass. Fixed so results do not depend on the
    /// number of worker threads.
    pub chunk_size: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            threshold: super::DEFAULT_THRESHOLD,
            max_len: 32,
            chunk_size: 64,
        }
    }
}

/// Scores every pair with the synonymy head, dropout off.
pub fn classify_pairs(
    params: &ModelParams<f32>,
    atoms: &AtomTable,
    pairs: &PairSet,
    vocab: &WordPieceVocab,
    options: &ClassifyOptions,
) -> Result<PredictionSet, EvalError> {
    if params.config.vocab_size != vocab.len() {
        return Err(EvalError::VocabMismatch {
            model: params.config.vocab_size,
            vocab: vocab.len(),
        });
    }
    for p in &pairs.pairs {
        for aui in [&p.aui1, &p.aui2] {
            if atoms.get(aui).is_none() {
                return Err(EvalError::UnknownAui(aui.clone()));
            }
        }
    }
    let chunks: Vec<Vec<f64>> = pairs
        .pairs
        .par_chunks(options.chunk_size.max(1))
        .map(|chunk| -> Result<Vec<f64>, EvalError> {
            let mut seqs = Vec::with_capacity(chunk.len());
            for p in chunk {
                let t1 = &atoms.get(&p.aui1).expect("checked").text;
                let t2 = &atoms.get(&p.aui2).expect("checked").text;
                seqs.push(build_sp_input(vocab, t1, t2, options.max_len)?.trimmed());
            }
            Ok(forward_sp(params, &seqs, Mode::Eval)?.probs())
        })
        .collect::<Result<_, _>>()?;
    let records = pairs
        .pairs
        .iter()
        .zip(chunks.into_iter().flatten())
        .map(|(p, prob)| Prediction {
            aui1: p.aui1.clone(),
            aui2: p.aui2.clone(),
            label: p.synonym,
            prob: prob.clamp(0.0, 1.0),
        })
        .collect();
    PredictionSet::new(records, options.threshold)
}
