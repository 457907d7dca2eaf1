use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::sequence::TokenSequence;
use super::vocab::{MASK_ID, NUM_SPECIAL};
use crate::rng::rng_from_seed;

pub const MASK_PROB: f64 = 0.15;
const MASK_TOKEN_SHARE: f64 = 0.8;
const RANDOM_TOKEN_SHARE: f64 = 0.1;

/// A corrupted sequence with the original ids at the selected positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedBatch {
    pub input: TokenSequence,
    /// `Some(original id)` where the position is an MLM target.
    pub labels: Vec<Option<u32>>,
}

impl MaskedBatch {
    pub fn num_targets(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }
}

/// Selects each real non-special token with probability 0.15; a selected
/// token becomes `[MASK]` 80% of the time, a random non-special id 10% of the
/// time, and stays unchanged otherwise.
pub fn apply_mlm_masking(seq: &TokenSequence, vocab_size: usize, seed: u64) -> MaskedBatch {
    apply_mlm_masking_with(seq, vocab_size, &mut rng_from_seed(seed))
}

pub fn apply_mlm_masking_with(seq: &TokenSequence, vocab_size: usize, rng: &mut ChaCha8Rng) -> MaskedBatch {
    let mut input = seq.clone();
    let mut labels = vec![None; seq.len()];
    let can_randomize = vocab_size > NUM_SPECIAL as usize;
    for (pos, (&id, &mask)) in seq.ids.iter().zip(&seq.attention_mask).enumerate() {
        if mask == 0 || id < NUM_SPECIAL {
            continue;
        }
        if !rng.random_bool(MASK_PROB) {
            continue;
        }
        labels[pos] = Some(id);
        let r: f64 = rng.random();
        if r < MASK_TOKEN_SHARE {
            input.ids[pos] = MASK_ID;
        } else if r < MASK_TOKEN_SHARE + RANDOM_TOKEN_SHARE && can_randomize {
            input.ids[pos] = rng.random_range(NUM_SPECIAL..vocab_size as u32);
        }
    }
    MaskedBatch { input, labels }
}
