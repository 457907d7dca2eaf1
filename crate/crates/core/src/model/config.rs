use serde::{Deserialize, Serialize};

use super::ModelError;

/// What the synonymy head reads from the `[CLS]` position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClsPooling {
    /// The final hidden state as is.
    #[default]
    Raw,
    /// `tanh(W h + b)` over the final hidden state.
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
    pub pooling: ClsPooling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 8000,
            hidden_size: 128,
            num_layers: 2,
            num_heads: 2,
            intermediate_size: 512,
            max_positions: 64,
            dropout: 0.1,
            layer_norm_eps: 1e-12,
            pooling: ClsPooling::Raw,
        }
    }
}

/// How the optimizer treats an array and how it is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayKind {
    Embedding,
    Weight,
    Bias,
    NormScale,
    NormShift,
}

impl ArrayKind {
    pub fn decays(self) -> bool {
        matches!(self, ArrayKind::Embedding | ArrayKind::Weight)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArraySpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ArrayKind,
}

impl ArraySpec {
    fn new(name: impl Into<String>, shape: &[usize], kind: ArrayKind) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            kind,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.vocab_size <= crate::tokenizer::NUM_SPECIAL as usize {
            return bad(format!("vocab_size {} leaves no room beyond the specials", self.vocab_size));
        }
        if self.hidden_size == 0 || self.num_heads == 0 || !self.hidden_size.is_multiple_of(self.num_heads) {
            return bad(format!(
                "hidden_size {} must be a positive multiple of num_heads {}",
                self.hidden_size, self.num_heads
            ));
        }
        if self.intermediate_size == 0 || self.max_positions == 0 {
            return bad("intermediate_size and max_positions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.layer_norm_eps.is_nan() || self.layer_norm_eps <= 0.0 {
            return bad(format!("layer_norm_eps {} must be positive", self.layer_norm_eps));
        }
        Ok(())
    }

    /// Checks that parameters shaped by `self` can be used where `expected`
    /// is configured.
    pub fn check_compatible(&self, expected: &ModelConfig) -> Result<(), ModelError> {
        let fields = [
            ("hidden size", self.hidden_size, expected.hidden_size),
            ("vocab size", self.vocab_size, expected.vocab_size),
            ("layer count", self.num_layers, expected.num_layers),
            ("head count", self.num_heads, expected.num_heads),
            ("intermediate size", self.intermediate_size, expected.intermediate_size),
            ("max positions", self.max_positions, expected.max_positions),
        ];
        for (what, found, wanted) in fields {
            if found != wanted {
                return Err(ModelError::Incompatible(format!("{what} mismatch {found} vs {wanted}")));
            }
        }
        if self.pooling != expected.pooling {
            return Err(ModelError::Incompatible(format!(
                "pooling mismatch {:?} vs {:?}",
                self.pooling, expected.pooling
            )));
        }
        Ok(())
    }

    /// Every parameter array in declaration order.
    pub fn array_specs(&self) -> Vec<ArraySpec> {
        use ArrayKind::*;
        let (v, h, f, p) = (self.vocab_size, self.hidden_size, self.intermediate_size, self.max_positions);
        let mut specs = vec![
            ArraySpec::new("embeddings.word", &[v, h], Embedding),
            ArraySpec::new("embeddings.segment", &[2, h], Embedding),
            ArraySpec::new("embeddings.position", &[p, h], Embedding),
            ArraySpec::new("embeddings.norm.gamma", &[h], NormScale),
            ArraySpec::new("embeddings.norm.beta", &[h], NormShift),
        ];
        for l in 0..self.num_layers {
            let pre = format!("layers.{l}");
            for proj in ["query", "key", "value", "output"] {
                specs.push(ArraySpec::new(format!("{pre}.attention.{proj}.weight"), &[h, h], Weight));
                specs.push(ArraySpec::new(format!("{pre}.attention.{proj}.bias"), &[h], Bias));
            }
            specs.push(ArraySpec::new(format!("{pre}.attention.norm.gamma"), &[h], NormScale));
            specs.push(ArraySpec::new(format!("{pre}.attention.norm.beta"), &[h], NormShift));
            specs.push(ArraySpec::new(format!("{pre}.ffn.in.weight"), &[h, f], Weight));
            specs.push(ArraySpec::new(format!("{pre}.ffn.in.bias"), &[f], Bias));
            specs.push(ArraySpec::new(format!("{pre}.ffn.out.weight"), &[f, h], Weight));
            specs.push(ArraySpec::new(format!("{pre}.ffn.out.bias"), &[h], Bias));
            specs.push(ArraySpec::new(format!("{pre}.ffn.norm.gamma"), &[h], NormScale));
            specs.push(ArraySpec::new(format!("{pre}.ffn.norm.beta"), &[h], NormShift));
        }
        if self.pooling == ClsPooling::Tanh {
            specs.push(ArraySpec::new("pooler.weight", &[h, h], Weight));
            specs.push(ArraySpec::new("pooler.bias", &[h], Bias));
        }
        specs.extend([
            ArraySpec::new("mlm.transform.weight", &[h, h], Weight),
            ArraySpec::new("mlm.transform.bias", &[h], Bias),
            ArraySpec::new("mlm.norm.gamma", &[h], NormScale),
            ArraySpec::new("mlm.norm.beta", &[h], NormShift),
            ArraySpec::new("mlm.output_bias", &[v], Bias),
            ArraySpec::new("sp.weight", &[h, 2], Weight),
            ArraySpec::new("sp.bias", &[2], Bias),
        ]);
        specs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_indivisible_heads() {
        let c = ModelConfig { hidden_size: 130, num_heads: 4, ..ModelConfig::default() };
        assert!(c.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn hidden_mismatch_message() {
        let small = ModelConfig::default();
        let big = ModelConfig { hidden_size: 256, ..ModelConfig::default() };
        let err = small.check_compatible(&big).unwrap_err();
        assert!(err.to_string().contains("hidden size mismatch 128 vs 256"), "{err}");
    }
}
