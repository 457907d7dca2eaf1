use std::path::{Path, PathBuf};

use serde_json::json;

use super::epoch::{encode_mlm_corpus, encode_sp_examples, train_epoch_mlm, train_epoch_sp, Trainer};
use super::history::{EpochRecord, Phase, TrainingHistory};
use super::{MlmBudget, MlmCorpus, Schedule, TrainingError, Variant};
use crate::corpus::{AtomTable, PairSet};
use crate::evaluation::{classify_pairs, compute_metrics, ClassifyOptions};
use crate::model::{init_params, Metadata, ModelCheckpoint, ModelConfig};
use crate::rng::derive_seed;
use crate::tokenizer::WordPieceVocab;

pub const MLM_FINAL: &str = "mlm-final.ubrt";
pub const BEST_CHECKPOINT: &str = "best.ubrt";

const INIT_STREAM: u64 = 0x494E_4954;
const MLM_EPOCH_STREAM: u64 = 0x4D4C_4D00;
const SP_EPOCH_STREAM: u64 = 0x5350_0000;

/// `sp-epoch-003.ubrt`; epoch 0 is the state before any SP update.
pub fn checkpoint_name(phase: Phase, epoch: u32) -> String {
    match phase {
        Phase::Sp => format!("sp-epoch-{epoch:03}.ubrt"),
        Phase::Mlm => format!("mlm-epoch-{epoch:03}.ubrt"),
    }
}

/// Raw text lines for the MLM phase.
#[derive(Debug, Clone, Default)]
pub struct MlmData {
    pub atom_lines: Option<Vec<String>>,
    pub literature_lines: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub atoms: &'a AtomTable,
    pub vocab: &'a WordPieceVocab,
    pub train: &'a PairSet,
    pub dev: &'a PairSet,
    pub mlm: &'a MlmData,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub best: ModelCheckpoint,
    pub best_path: PathBuf,
    pub history: TrainingHistory,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainingError + '_ {
    move |source| TrainingError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn mlm_lines(schedule: &Schedule, mlm: &MlmData) -> Result<Option<Vec<String>>, TrainingError> {
    let missing = || TrainingError::MissingCorpus(schedule.variant);
    Ok(match schedule.mlm_corpus {
        MlmCorpus::None => None,
        MlmCorpus::AtomsOnly => Some(mlm.atom_lines.clone().ok_or_else(missing)?),
        MlmCorpus::AtomsAndLiterature => {
            let mut lines = mlm.atom_lines.clone().ok_or_else(missing)?;
            lines.extend(mlm.literature_lines.iter().flatten().cloned());
            if mlm.literature_lines.is_none() {
                return Err(missing());
            }
            Some(lines)
        }
    })
}

fn check_inputs(schedule: &Schedule, config: &ModelConfig, data: &TrainingData<'_>) -> Result<(), TrainingError> {
    schedule.validate()?;
    config.validate()?;
    if config.vocab_size != data.vocab.len() {
        return Err(TrainingError::InvalidSchedule(format!(
            "model vocab_size {} but the tokenizer has {} tokens",
            config.vocab_size,
            data.vocab.len()
        )));
    }
    let mut lens = vec![("sp", schedule.sp_max_len)];
    if schedule.mlm_corpus != MlmCorpus::None {
        lens.push(("mlm", schedule.mlm_max_len));
    }
    for (phase, len) in lens {
        if len > config.max_positions {
            return Err(TrainingError::InvalidSchedule(format!(
                "{phase} sequence length {len} exceeds max positions {}",
                config.max_positions
            )));
        }
    }
    if data.train.is_empty() {
        return Err(TrainingError::EmptyData);
    }
    if data.dev.is_empty() {
        return Err(TrainingError::EmptyDev);
    }
    Ok(())
}

/// Runs the schedule's phases, writing checkpoints and history to `out_dir`,
/// and returns the SP checkpoint with the best dev F1.
pub fn run_schedule(
    schedule: &Schedule,
    config: &ModelConfig,
    data: &TrainingData<'_>,
    out_dir: &Path,
    on_record: &mut dyn FnMut(&EpochRecord),
) -> Result<RunOutput, TrainingError> {
    check_inputs(schedule, config, data)?;
    let mlm_lines = mlm_lines(schedule, data.mlm)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut history = TrainingHistory {
        variant: schedule.variant,
        seed: schedule.seed,
        init_checkpoint: schedule.init_checkpoint.clone(),
        mlm_budget: mlm_lines.as_ref().map(|_| schedule.mlm_budget),
        mlm_seq_len: mlm_lines.as_ref().map(|_| schedule.mlm_max_len),
        sp_seq_len: schedule.sp_max_len,
        best_epoch: None,
        best_dev_f1: None,
        records: Vec::new(),
    };
    let base_meta = |phase: &str| -> Metadata {
        let mut m = Metadata::new();
        m.insert("variant".into(), json!(schedule.variant.to_string()));
        m.insert("phase".into(), json!(phase));
        m.insert("seed".into(), json!(schedule.seed));
        if let Some(p) = &schedule.init_checkpoint {
            m.insert("init_checkpoint".into(), json!(p.display().to_string()));
        }
        m
    };

    let mut params = match (&schedule.variant, &schedule.init_checkpoint) {
        (Variant::Init, Some(path)) => {
            let mut p = ModelCheckpoint::load_compatible(path, config)?.params;
            p.config = config.clone();
            p
        }
        _ => init_params(config, derive_seed(schedule.seed, INIT_STREAM))?,
    };

    if let Some(lines) = mlm_lines {
        let corpus = encode_mlm_corpus(data.vocab, &lines, schedule.mlm_max_len)?;
        if corpus.is_empty() {
            return Err(TrainingError::EmptyData);
        }
        let per_epoch = corpus.len().div_ceil(schedule.batch_size) as u64;
        let (total, max_epochs) = match schedule.mlm_budget {
            MlmBudget::Steps(n) => (n, u32::MAX),
            MlmBudget::Epochs(e) => (per_epoch * e as u64, e),
        };
        let mut trainer = Trainer::new(params, &schedule.mlm_optimizer, total);
        let mut epoch = 0u32;
        while trainer.step() < total && epoch < max_epochs {
            epoch += 1;
            let remaining = total - trainer.step();
            let seed = derive_seed(schedule.seed, MLM_EPOCH_STREAM + epoch as u64);
            let (loss, steps) = train_epoch_mlm(&mut trainer, &corpus, schedule.batch_size, seed, Some(remaining))?;
            if steps == 0 {
                return Err(TrainingError::InvalidSchedule(
                    "mlm corpus produced no masked positions in a full pass".into(),
                ));
            }
            let record = EpochRecord {
                phase: Phase::Mlm,
                epoch,
                steps,
                mean_loss: loss,
                seq_len: schedule.mlm_max_len,
                dev: None,
                checkpoint: None,
            };
            on_record(&record);
            history.records.push(record);
        }
        let mut meta = base_meta("mlm");
        meta.insert("steps".into(), json!(trainer.step()));
        meta.insert("seq_len".into(), json!(schedule.mlm_max_len));
        let final_ckpt = ModelCheckpoint {
            params: trainer.params,
            optimizer: Some(trainer.state),
            metadata: meta,
        };
        let path = out_dir.join(MLM_FINAL);
        final_ckpt.save(&path)?;
        if let Some(last) = history.records.last_mut() {
            last.checkpoint = Some(MLM_FINAL.into());
        }
        // the SP phase starts from what was written, with a fresh optimizer
        params = ModelCheckpoint::load(&path)?.params;
        params.config = config.clone();
    }

    let examples = encode_sp_examples(data.atoms, data.vocab, data.train, schedule.sp_max_len)?;
    let per_epoch = examples.len().div_ceil(schedule.batch_size) as u64;
    let mut trainer = Trainer::new(params, &schedule.sp_optimizer, per_epoch * schedule.sp_epochs as u64);
    let mut meta = base_meta("sp");
    meta.insert("epoch".into(), json!(0));
    ModelCheckpoint {
        params: trainer.params.clone(),
        optimizer: None,
        metadata: meta,
    }
    .save(&out_dir.join(checkpoint_name(Phase::Sp, 0)))?;

    let classify = ClassifyOptions {
        threshold: schedule.threshold,
        max_len: schedule.sp_max_len,
        ..ClassifyOptions::default()
    };
    for epoch in 1..=schedule.sp_epochs {
        let seed = derive_seed(schedule.seed, SP_EPOCH_STREAM + epoch as u64);
        let loss = train_epoch_sp(&mut trainer, &examples, schedule.batch_size, seed, schedule.swap_segments)?;
        let preds = classify_pairs(&trainer.params, data.atoms, data.dev, data.vocab, &classify)?;
        let dev = compute_metrics(&preds)?;
        let name = checkpoint_name(Phase::Sp, epoch);
        let mut meta = base_meta("sp");
        meta.insert("epoch".into(), json!(epoch));
        meta.insert("mean_loss".into(), json!(loss));
        meta.insert("dev_f1".into(), json!(dev.f1));
        meta.insert("seq_len".into(), json!(schedule.sp_max_len));
        ModelCheckpoint {
            params: trainer.params.clone(),
            optimizer: None,
            metadata: meta,
        }
        .save(&out_dir.join(&name))?;
        let record = EpochRecord {
            phase: Phase::Sp,
            epoch,
            steps: per_epoch,
            mean_loss: loss,
            seq_len: schedule.sp_max_len,
            dev: Some(dev),
            checkpoint: Some(name),
        };
        on_record(&record);
        history.records.push(record);
        history.save(out_dir)?;
    }

    let best = history.select_best().expect("at least one SP epoch").clone();
    history.best_epoch = Some(best.epoch);
    history.best_dev_f1 = best.dev.as_ref().map(|m| m.f1);
    history.save(out_dir)?;
    let src = out_dir.join(best.checkpoint.as_deref().expect("SP records name their checkpoint"));
    let best_path = out_dir.join(BEST_CHECKPOINT);
    std::fs::copy(&src, &best_path).map_err(io_err(&best_path))?;
    Ok(RunOutput {
        best: ModelCheckpoint::load(&best_path)?,
        best_path,
        history,
    })
}
