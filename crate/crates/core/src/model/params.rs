use rand_distr::{Distribution, Normal};

use super::config::{ArrayKind, ArraySpec, ClsPooling, ModelConfig};
use super::scalar::{cast, Scalar};
use super::ModelError;
use crate::rng::rng_from_seed;

pub const INIT_STD: f64 = 0.02;

/// Dense layer `y = x W + b` with `W` stored `[d_in × d_out]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub d_in: usize,
    pub d_out: usize,
}

impl<T: Scalar> Linear<T> {
    fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: vec![T::zero(); d_in * d_out],
            bias: vec![T::zero(); d_out],
            d_in,
            d_out,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Norm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Scalar> Norm<T> {
    fn zeros(h: usize) -> Self {
        Self {
            gamma: vec![T::zero(); h],
            beta: vec![T::zero(); h],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<T> {
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub attn_out: Linear<T>,
    pub attn_norm: Norm<T>,
    pub ffn_in: Linear<T>,
    pub ffn_out: Linear<T>,
    pub ffn_norm: Norm<T>,
}

/// All trainable arrays. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub word_emb: Vec<T>,
    pub segment_emb: Vec<T>,
    pub position_emb: Vec<T>,
    pub emb_norm: Norm<T>,
    pub layers: Vec<EncoderLayer<T>>,
    pub pooler: Option<Linear<T>>,
    pub mlm_transform: Linear<T>,
    pub mlm_norm: Norm<T>,
    pub mlm_bias: Vec<T>,
    pub sp_head: Linear<T>,
}

pub type Gradients<T> = ModelParams<T>;

impl<T: Scalar> ModelParams<T> {
    /// Every array set to zero; the shape of a gradient buffer.
    pub fn zeros(config: &ModelConfig) -> Self {
        let (v, h, f, p) = (
            config.vocab_size,
            config.hidden_size,
            config.intermediate_size,
            config.max_positions,
        );
        let layer = || EncoderLayer {
            query: Linear::zeros(h, h),
            key: Linear::zeros(h, h),
            value: Linear::zeros(h, h),
            attn_out: Linear::zeros(h, h),
            attn_norm: Norm::zeros(h),
            ffn_in: Linear::zeros(h, f),
            ffn_out: Linear::zeros(f, h),
            ffn_norm: Norm::zeros(h),
        };
        Self {
            config: config.clone(),
            word_emb: vec![T::zero(); v * h],
            segment_emb: vec![T::zero(); 2 * h],
            position_emb: vec![T::zero(); p * h],
            emb_norm: Norm::zeros(h),
            layers: (0..config.num_layers).map(|_| layer()).collect(),
            pooler: (config.pooling == ClsPooling::Tanh).then(|| Linear::zeros(h, h)),
            mlm_transform: Linear::zeros(h, h),
            mlm_norm: Norm::zeros(h),
            mlm_bias: vec![T::zero(); v],
            sp_head: Linear::zeros(h, 2),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Arrays in the order of [`ModelConfig::array_specs`].
    pub fn arrays(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = vec![
            &self.word_emb,
            &self.segment_emb,
            &self.position_emb,
            &self.emb_norm.gamma,
            &self.emb_norm.beta,
        ];
        for l in &self.layers {
            for lin in [&l.query, &l.key, &l.value, &l.attn_out] {
                out.push(&lin.weight);
                out.push(&lin.bias);
            }
            out.extend([&l.attn_norm.gamma[..], &l.attn_norm.beta]);
            out.extend([&l.ffn_in.weight[..], &l.ffn_in.bias, &l.ffn_out.weight, &l.ffn_out.bias]);
            out.extend([&l.ffn_norm.gamma[..], &l.ffn_norm.beta]);
        }
        if let Some(p) = &self.pooler {
            out.extend([&p.weight[..], &p.bias]);
        }
        out.extend([
            &self.mlm_transform.weight[..],
            &self.mlm_transform.bias,
            &self.mlm_norm.gamma,
            &self.mlm_norm.beta,
            &self.mlm_bias,
            &self.sp_head.weight,
            &self.sp_head.bias,
        ]);
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out: Vec<&mut Vec<T>> = vec![
            &mut self.word_emb,
            &mut self.segment_emb,
            &mut self.position_emb,
            &mut self.emb_norm.gamma,
            &mut self.emb_norm.beta,
        ];
        for l in &mut self.layers {
            for lin in [&mut l.query, &mut l.key, &mut l.value, &mut l.attn_out] {
                out.push(&mut lin.weight);
                out.push(&mut lin.bias);
            }
            out.push(&mut l.attn_norm.gamma);
            out.push(&mut l.attn_norm.beta);
            out.push(&mut l.ffn_in.weight);
            out.push(&mut l.ffn_in.bias);
            out.push(&mut l.ffn_out.weight);
            out.push(&mut l.ffn_out.bias);
            out.push(&mut l.ffn_norm.gamma);
            out.push(&mut l.ffn_norm.beta);
        }
        if let Some(p) = &mut self.pooler {
            out.push(&mut p.weight);
            out.push(&mut p.bias);
        }
        out.push(&mut self.mlm_transform.weight);
        out.push(&mut self.mlm_transform.bias);
        out.push(&mut self.mlm_norm.gamma);
        out.push(&mut self.mlm_norm.beta);
        out.push(&mut self.mlm_bias);
        out.push(&mut self.sp_head.weight);
        out.push(&mut self.sp_head.bias);
        out
    }

    pub fn specs(&self) -> Vec<ArraySpec> {
        self.config.array_specs()
    }

    pub fn num_parameters(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    /// Looks up an array by its checkpoint name.
    pub fn array(&self, name: &str) -> Option<&[T]> {
        let specs = self.specs();
        let idx = specs.iter().position(|s| s.name == name)?;
        Some(self.arrays()[idx])
    }

    /// Builds parameters from arrays laid out as [`ModelConfig::array_specs`].
    pub fn from_arrays(config: &ModelConfig, arrays: Vec<Vec<T>>) -> Result<Self, ModelError> {
        let specs = config.array_specs();
        if arrays.len() != specs.len() {
            return Err(ModelError::Incompatible(format!(
                "array count mismatch {} vs {}",
                arrays.len(),
                specs.len()
            )));
        }
        let mut params = Self::zeros(config);
        for ((slot, spec), data) in params.arrays_mut().into_iter().zip(&specs).zip(arrays) {
            if data.len() != spec.numel() {
                return Err(ModelError::Incompatible(format!(
                    "{} has {} values, expected {}",
                    spec.name,
                    data.len(),
                    spec.numel()
                )));
            }
            *slot = data;
        }
        Ok(params)
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for a in self.arrays_mut() {
            for x in a.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for a in self.arrays_mut() {
            a.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    /// Name of the first array holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        let specs = self.specs();
        self.arrays()
            .iter()
            .zip(specs)
            .find(|(a, _)| a.iter().any(|x| !x.is_finite()))
            .map(|(_, s)| s.name)
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let arrays = self
            .arrays()
            .iter()
            .map(|a| a.iter().map(|x| cast::<U>(x.to_f64().unwrap_or(f64::NAN))).collect())
            .collect();
        ModelParams::from_arrays(&self.config, arrays).expect("same config")
    }
}

/// Normal(0, 0.02²) weights and embeddings, zero biases, unit norm scales.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>, ModelError> {
    config.validate()?;
    let mut params = ModelParams::<T>::zeros(config);
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0f64, INIT_STD).expect("valid std");
    let specs = config.array_specs();
    for (arr, spec) in params.arrays_mut().into_iter().zip(&specs) {
        match spec.kind {
            ArrayKind::Embedding | ArrayKind::Weight => {
                for x in arr.iter_mut() {
                    *x = cast(normal.sample(&mut rng));
                }
            }
            ArrayKind::NormScale => arr.iter_mut().for_each(|x| *x = T::one()),
            ArrayKind::Bias | ArrayKind::NormShift => {}
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 40,
            hidden_size: 8,
            num_layers: 2,
            num_heads: 2,
            intermediate_size: 16,
            max_positions: 12,
            pooling: ClsPooling::Tanh,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn arrays_follow_specs() {
        for cfg in [tiny(), ModelConfig { pooling: ClsPooling::Raw, ..tiny() }] {
            let p = init_params::<f32>(&cfg, 1).unwrap();
            let specs = cfg.array_specs();
            let arrays = p.arrays();
            assert_eq!(arrays.len(), specs.len());
            for (a, s) in arrays.iter().zip(&specs) {
                assert_eq!(a.len(), s.numel(), "{}", s.name);
            }
            let mut q = p.clone();
            assert_eq!(q.arrays_mut().len(), specs.len());
        }
    }

    #[test]
    fn init_contract() {
        let cfg = tiny();
        let a = init_params::<f32>(&cfg, 9).unwrap();
        let b = init_params::<f32>(&cfg, 9).unwrap();
        assert_eq!(a, b);
        for (arr, spec) in a.arrays().iter().zip(cfg.array_specs()) {
            match spec.kind {
                ArrayKind::NormScale => assert!(arr.iter().all(|&x| x == 1.0)),
                ArrayKind::NormShift | ArrayKind::Bias => assert!(arr.iter().all(|&x| x == 0.0)),
                _ => assert!(arr.iter().any(|&x| x != 0.0)),
            }
        }
    }

    #[test]
    fn weight_mean_is_near_zero() {
        let cfg = ModelConfig::default();
        let p = init_params::<f64>(&cfg, 3).unwrap();
        let w = &p.layers[0].query.weight;
        assert_eq!(w.len(), 128 * 128);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        // standard error of the mean is 0.02 / 128
        assert!(mean.abs() < 3.0 * 0.02 / 128.0, "{mean}");
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!((var.sqrt() - 0.02).abs() < 0.001);
    }
}
