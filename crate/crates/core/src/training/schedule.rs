use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::TrainingError;
use crate::model::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// SP only, from random weights.
    A,
    /// MLM over atoms and literature, then SP.
    B1,
    /// MLM over atoms only, then SP.
    B2,
    /// SP starting from an existing checkpoint.
    #[serde(rename = "init")]
    Init,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::A => "A",
            Variant::B1 => "B1",
            Variant::B2 => "B2",
            Variant::Init => "init",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Variant::A),
            "B1" | "b1" => Ok(Variant::B1),
            "B2" | "b2" => Ok(Variant::B2),
            "init" => Ok(Variant::Init),
            other => Err(format!("unknown variant {other:?}; expected A, B1, B2 or init")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlmCorpus {
    None,
    AtomsAndLiterature,
    AtomsOnly,
}

impl Variant {
    pub fn mlm_corpus(self) -> MlmCorpus {
        match self {
            Variant::A | Variant::Init => MlmCorpus::None,
            Variant::B1 => MlmCorpus::AtomsAndLiterature,
            Variant::B2 => MlmCorpus::AtomsOnly,
        }
    }

    /// MLM sequence length used by the variant unless overridden.
    pub fn default_mlm_len(self) -> usize {
        match self {
            Variant::B1 => 512,
            _ => 32,
        }
    }
}

/// MLM length, in optimizer steps or in passes over the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlmBudget {
    Steps(u64),
    Epochs(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub lr: f64,
    /// Fraction of the phase's steps spent warming up linearly.
    pub warmup_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            warmup_fraction: 0.0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub variant: Variant,
    pub mlm_corpus: MlmCorpus,
    pub mlm_budget: MlmBudget,
    pub sp_epochs: u32,
    pub sp_max_len: usize,
    pub mlm_max_len: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_checkpoint: Option<PathBuf>,
    pub sp_optimizer: OptimizerSettings,
    pub mlm_optimizer: OptimizerSettings,
    /// Probability threshold for dev metrics.
    pub threshold: f64,
    /// Present SP pairs in a random segment order each epoch.
    pub swap_segments: bool,
}

impl Schedule {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            mlm_corpus: variant.mlm_corpus(),
            mlm_budget: MlmBudget::Steps(2000),
            sp_epochs: 20,
            sp_max_len: 32,
            mlm_max_len: variant.default_mlm_len(),
            batch_size: 32,
            seed: 42,
            init_checkpoint: None,
            sp_optimizer: OptimizerSettings::default(),
            mlm_optimizer: OptimizerSettings::default(),
            threshold: crate::evaluation::DEFAULT_THRESHOLD,
            swap_segments: true,
        }
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: String| Err(TrainingError::InvalidSchedule(m));
        if self.mlm_corpus != self.variant.mlm_corpus() {
            return bad(format!(
                "variant {} uses mlm corpus {:?}, not {:?}",
                self.variant,
                self.variant.mlm_corpus(),
                self.mlm_corpus
            ));
        }
        if self.variant == Variant::Init && self.init_checkpoint.is_none() {
            return Err(TrainingError::MissingInitCheckpoint);
        }
        if self.variant != Variant::Init && self.init_checkpoint.is_some() {
            return bad(format!("variant {} does not take an init checkpoint", self.variant));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.sp_epochs == 0 {
            return bad("sp_epochs must be positive".into());
        }
        if matches!(self.mlm_budget, MlmBudget::Steps(0) | MlmBudget::Epochs(0)) && self.mlm_corpus != MlmCorpus::None {
            return bad("mlm budget must be positive".into());
        }
        for (name, o) in [("sp", &self.sp_optimizer), ("mlm", &self.mlm_optimizer)] {
            if o.lr.is_nan() || o.lr < 0.0 || !(0.0..=1.0).contains(&o.warmup_fraction) {
                return bad(format!("{name} optimizer lr must be >= 0 and warmup_fraction in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_select_their_corpus() {
        assert_eq!(Schedule::new(Variant::A).mlm_corpus, MlmCorpus::None);
        assert_eq!(Schedule::new(Variant::B1).mlm_corpus, MlmCorpus::AtomsAndLiterature);
        assert_eq!(Schedule::new(Variant::B2).mlm_corpus, MlmCorpus::AtomsOnly);
        assert_eq!(Schedule::new(Variant::B1).mlm_max_len, 512);
        assert_eq!(Schedule::new(Variant::B2).mlm_max_len, 32);
    }

    #[test]
    fn init_needs_a_path() {
        assert!(matches!(
            Schedule::new(Variant::Init).validate(),
            Err(TrainingError::MissingInitCheckpoint)
        ));
        let mut s = Schedule::new(Variant::A);
        s.mlm_corpus = MlmCorpus::AtomsOnly;
        assert!(s.validate().is_err());
    }
}
