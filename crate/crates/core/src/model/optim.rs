use serde::{Deserialize, Serialize};

use super::config::ArraySpec;
use super::params::{Gradients, ModelParams};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moments for every parameter array, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &ModelParams<f32>) -> Self {
        let zeros: Vec<Vec<f32>> = params.arrays().iter().map(|a| vec![0.0; a.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn matches(&self, specs: &[ArraySpec]) -> bool {
        self.m.len() == specs.len()
            && self.v.len() == specs.len()
            && specs
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(s, (m, v))| m.len() == s.numel() && v.len() == s.numel())
    }
}

/// One AdamW update with bias correction and decoupled weight decay.
///
/// Decay applies only to arrays whose kind decays (embeddings and weight
/// matrices). Nothing is modified if any gradient is non-finite.
pub fn optimizer_step(
    params: &mut ModelParams<f32>,
    grads: &Gradients<f32>,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<(), ModelError> {
    let specs = params.specs();
    if !state.matches(&specs) {
        return Err(ModelError::Incompatible("optimizer state does not match parameter shapes".into()));
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(ModelError::NonFiniteGradient(name));
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    let step_size = (lr / bc1) as f32;
    let bc2_sqrt = bc2.sqrt() as f32;
    let eps = cfg.eps as f32;
    let grad_arrays = grads.arrays();
    for (i, (p, spec)) in params.arrays_mut().into_iter().zip(&specs).enumerate() {
        let g = grad_arrays[i];
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let decay = if spec.kind.decays() { (lr * cfg.weight_decay) as f32 } else { 0.0 };
        for j in 0..p.len() {
            if decay != 0.0 {
                p[j] -= decay * p[j];
            }
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            p[j] -= step_size * m[j] / (v[j].sqrt() / bc2_sqrt + eps);
        }
    }
    if let Some(name) = params.first_non_finite() {
        return Err(ModelError::NonFiniteParameter(name));
    }
    Ok(())
}

/// Linear warmup to `peak`, then linear decay to zero at `total` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub peak: f64,
    pub warmup: u64,
    pub total: u64,
}

impl LinearSchedule {
    /// Learning rate for the 0-based `step`.
    pub fn lr(&self, step: u64) -> f64 {
        if step < self.warmup {
            return self.peak * (step + 1) as f64 / self.warmup as f64;
        }
        if self.total <= self.warmup {
            return self.peak;
        }
        let remaining = self.total.saturating_sub(step) as f64;
        self.peak * remaining / (self.total - self.warmup) as f64
    }
}
