use rand::seq::SliceRandom;
use rand::Rng;

use super::{OptimizerSettings, TrainingError};
use crate::corpus::{AtomTable, PairSet};
use crate::model::{
    accumulate_mlm, accumulate_sp, forward_mlm, forward_sp, optimizer_step, AdamConfig, AdamState, Gradients,
    LinearSchedule, Mode, ModelParams,
};
use crate::rng::{derive_seed, stream_rng};
use crate::tokenizer::{apply_mlm_masking, build_mlm_input, build_sp_input, TokenSequence, WordPieceVocab};

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4F50;
const MASK_STREAM: u64 = 0x4D41_534B;
const SWAP_STREAM: u64 = 0x5357_4150;

/// A pair encoded in both segment orders, unpadded, with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct SpExample {
    pub input: TokenSequence,
    pub swapped: TokenSequence,
    pub label: bool,
}

pub fn encode_sp_examples(
    atoms: &AtomTable,
    vocab: &WordPieceVocab,
    pairs: &PairSet,
    max_len: usize,
) -> Result<Vec<SpExample>, TrainingError> {
    pairs
        .pairs
        .iter()
        .map(|p| {
            let t1 = atoms.text_of(&p.aui1)?;
            let t2 = atoms.text_of(&p.aui2)?;
            Ok(SpExample {
                input: build_sp_input(vocab, t1, t2, max_len)?.trimmed(),
                swapped: build_sp_input(vocab, t2, t1, max_len)?.trimmed(),
                label: p.synonym,
            })
        })
        .collect()
}

/// Encodes corpus lines as unpadded `[CLS] text [SEP]` sequences; blank
/// lines are skipped.
pub fn encode_mlm_corpus<S: AsRef<str>>(
    vocab: &WordPieceVocab,
    lines: &[S],
    max_len: usize,
) -> Result<Vec<TokenSequence>, TrainingError> {
    let mut out = Vec::with_capacity(lines.len());
    for line in lines {
        let line = line.as_ref();
        if line.trim().is_empty() {
            continue;
        }
        out.push(build_mlm_input(vocab, line, max_len)?.trimmed());
    }
    Ok(out)
}

/// Parameters, optimizer state and learning-rate schedule of one phase.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: ModelParams<f32>,
    pub state: AdamState,
    pub adam: AdamConfig,
    pub schedule: LinearSchedule,
    grads: Gradients<f32>,
}

impl Trainer {
    /// Fresh optimizer state; the schedule spans `total_steps`.
    pub fn new(params: ModelParams<f32>, settings: &OptimizerSettings, total_steps: u64) -> Self {
        let warmup = (settings.warmup_fraction * total_steps as f64).round() as u64;
        Self {
            state: AdamState::new(&params),
            grads: params.zeros_like(),
            params,
            adam: settings.adam,
            schedule: LinearSchedule {
                peak: settings.lr,
                warmup,
                total: total_steps,
            },
        }
    }

    pub fn step(&self) -> u64 {
        self.state.step
    }

    fn apply(&mut self) -> Result<(), TrainingError> {
        let lr = self.schedule.lr(self.state.step);
        optimizer_step(&mut self.params, &self.grads, &mut self.state, lr, &self.adam)?;
        Ok(())
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, SHUFFLE_STREAM));
    order
}

/// One pass over `examples` in a seeded order; returns the mean batch loss.
///
/// With `swap_segments`, each pair is presented in a seeded random segment
/// order, since synonymy is symmetric.
pub fn train_epoch_sp(
    trainer: &mut Trainer,
    examples: &[SpExample],
    batch_size: usize,
    seed: u64,
    swap_segments: bool,
) -> Result<f64, TrainingError> {
    if examples.is_empty() || batch_size == 0 {
        return Err(TrainingError::EmptyData);
    }
    let order = shuffled(examples.len(), seed);
    let mut coin = stream_rng(seed, SWAP_STREAM);
    let swap: Vec<bool> = (0..examples.len()).map(|_| swap_segments && coin.random_bool(0.5)).collect();
    let mut total = 0.0;
    let mut batches = 0usize;
    for (b, chunk) in order.chunks(batch_size).enumerate() {
        let seqs: Vec<TokenSequence> = chunk
            .iter()
            .map(|&i| if swap[i] { examples[i].swapped.clone() } else { examples[i].input.clone() })
            .collect();
        let labels: Vec<bool> = chunk.iter().map(|&i| examples[i].label).collect();
        let mode = Mode::Train {
            seed: derive_seed(derive_seed(seed, DROPOUT_STREAM), b as u64),
        };
        let fwd = forward_sp(&trainer.params, &seqs, mode)?;
        total += fwd.loss(&labels);
        batches += 1;
        trainer.grads.fill_zero();
        accumulate_sp(&trainer.params, &fwd, &labels, labels.len(), &mut trainer.grads);
        drop(fwd);
        trainer.apply()?;
    }
    Ok(total / batches as f64)
}

/// One pass over `corpus` with fresh masking, stopping early after
/// `max_steps` optimizer steps. Batches that draw no masked position are
/// skipped. Returns the mean batch loss and the number of steps taken.
pub fn train_epoch_mlm(
    trainer: &mut Trainer,
    corpus: &[TokenSequence],
    batch_size: usize,
    seed: u64,
    max_steps: Option<u64>,
) -> Result<(f64, u64), TrainingError> {
    if corpus.is_empty() || batch_size == 0 {
        return Err(TrainingError::EmptyData);
    }
    let vocab_size = trainer.params.config.vocab_size;
    let order = shuffled(corpus.len(), seed);
    let mask_seed = derive_seed(seed, MASK_STREAM);
    let dropout_seed = derive_seed(seed, DROPOUT_STREAM);
    let mut total = 0.0;
    let mut steps = 0u64;
    for (b, chunk) in order.chunks(batch_size).enumerate() {
        if max_steps.is_some_and(|m| steps >= m) {
            break;
        }
        let batch: Vec<_> = chunk
            .iter()
            .map(|&i| apply_mlm_masking(&corpus[i], vocab_size, derive_seed(mask_seed, i as u64)))
            .collect();
        if batch.iter().all(|m| m.num_targets() == 0) {
            continue;
        }
        let mode = Mode::Train {
            seed: derive_seed(dropout_seed, b as u64),
        };
        let fwd = forward_mlm(&trainer.params, &batch, mode)?;
        total += fwd.loss();
        trainer.grads.fill_zero();
        accumulate_mlm(&trainer.params, &fwd, fwd.targets.len(), &mut trainer.grads);
        drop(fwd);
        trainer.apply()?;
        steps += 1;
    }
    let mean = if steps == 0 { 0.0 } else { total / steps as f64 };
    Ok((mean, steps))
}
