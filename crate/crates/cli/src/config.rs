use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use synonymy::corpus::{NegativeMode, PairConfig, SplitFractions, SynthConfig, DEFAULT_MAX_CONCEPT_ATOMS};
use synonymy::evaluation::DEFAULT_THRESHOLD;
use synonymy::model::ModelConfig;
use synonymy::training::{MlmBudget, OptimizerSettings, Schedule, Variant};

use crate::Usage;

/// The experiment file. Every section is optional in the file; commands
/// that need one fail with a usage error when it is missing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: Option<CorpusSection>,
    pub pairs: Option<PairsSection>,
    pub tokenizer: Option<TokenizerSection>,
    pub model: Option<ModelConfig>,
    pub schedule: Option<ScheduleSection>,
    pub eval: Option<EvalSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    /// Existing atom table. When unset, `synth` writes one into the run
    /// directory and later commands read it from there.
    pub atoms: Option<PathBuf>,
    /// Literature lines for tokenizer training; `synth` fills it too.
    pub literature: Option<PathBuf>,
    /// Atom table whose strings form the MLM corpus (B1, B2).
    pub mlm_atoms: Option<PathBuf>,
    /// Plain-text lines added to the MLM corpus (B1).
    pub mlm_literature: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
    /// Synthetic literature lines written by `synth`.
    #[serde(default)]
    pub literature_lines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairsSection {
    pub neg_ratio: f64,
    pub mode: NegativeMode,
    pub max_concept_atoms: usize,
    pub fractions: [f64; 3],
    /// Keep parts atom-disjoint instead of pair-disjoint.
    pub by_atom: bool,
    pub seed: u64,
}

impl Default for PairsSection {
    fn default() -> Self {
        Self {
            neg_ratio: 1.0,
            mode: NegativeMode::Uniform,
            max_concept_atoms: DEFAULT_MAX_CONCEPT_ATOMS,
            fractions: [0.6, 0.2, 0.2],
            by_atom: false,
            seed: 0,
        }
    }
}

impl PairsSection {
    pub fn pair_config(&self) -> PairConfig {
        PairConfig {
            neg_ratio: self.neg_ratio,
            mode: self.mode.clone(),
            seed: self.seed,
            max_concept_atoms: self.max_concept_atoms,
        }
    }

    pub fn split_fractions(&self) -> anyhow::Result<SplitFractions> {
        let [a, b, c] = self.fractions;
        Ok(SplitFractions::new(a, b, c)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerCorpus {
    Atoms,
    AtomsAndLiterature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerSection {
    pub vocab_size: usize,
    pub min_pair_frequency: u64,
    pub corpus: TokenizerCorpus,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        Self {
            vocab_size: 8000,
            min_pair_frequency: 2,
            corpus: TokenizerCorpus::Atoms,
        }
    }
}

/// Schedule fields that do not follow from the variant. Unset fields take
/// the variant's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub mlm_budget: Option<MlmBudget>,
    pub sp_epochs: Option<u32>,
    pub sp_max_len: Option<usize>,
    pub mlm_max_len: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub sp_optimizer: Option<OptimizerSettings>,
    pub mlm_optimizer: Option<OptimizerSettings>,
    pub swap_segments: Option<bool>,
}

impl ScheduleSection {
    pub fn resolve(&self, variant: Variant, init_checkpoint: Option<PathBuf>, threshold: f64) -> Schedule {
        let mut s = Schedule::new(variant);
        s.init_checkpoint = init_checkpoint;
        s.threshold = threshold;
        if let Some(v) = self.mlm_budget {
            s.mlm_budget = v;
        }
        if let Some(v) = self.sp_epochs {
            s.sp_epochs = v;
        }
        if let Some(v) = self.sp_max_len {
            s.sp_max_len = v;
        }
        if let Some(v) = self.mlm_max_len {
            s.mlm_max_len = v;
        }
        if let Some(v) = self.batch_size {
            s.batch_size = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.sp_optimizer {
            s.sp_optimizer = v;
        }
        if let Some(v) = self.mlm_optimizer {
            s.mlm_optimizer = v;
        }
        if let Some(v) = self.swap_segments {
            s.swap_segments = v;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub threshold: f64,
    /// Also write Jaccard-binned reports from `evaluate` and `baseline`.
    pub bins: bool,
    /// McNemar continuity correction.
    pub continuity_correction: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            bins: true,
            continuity_correction: true,
        }
    }
}

impl ExperimentConfig {
    /// Parses the file and makes relative paths relative to its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Usage::new(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Usage::new(format!("{}: {}", path.display(), e.message())))?;
        if cfg.model.is_some() {
            let raw: toml::Table = toml::from_str(&text)?;
            if raw.get("model").and_then(|m| m.get("vocab_size")).is_some() {
                return Err(Usage::new("model.vocab_size is taken from the trained vocabulary; remove it").into());
            }
        }
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(c) = cfg.corpus.as_mut() {
            for p in [&mut c.atoms, &mut c.literature, &mut c.mlm_atoms, &mut c.mlm_literature]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the normalized config, used to name run directories.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

pub fn section<'a, T>(s: &'a Option<T>, name: &str) -> anyhow::Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| Usage::new(format!("config has no [{name}] section")).into())
}
