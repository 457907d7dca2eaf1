use super::config::ClsPooling;
use super::encoder::{
    apply_mask, encoder_backward, encoder_forward, layer_norm, layer_norm_backward, linear, linear_backward,
    softmax, Dropout, EncoderCache, LnCache, Mode, Packed,
};
use super::params::{Gradients, ModelParams};
use super::scalar::{cast, gelu, gelu_grad, Scalar};
use super::ModelError;
use crate::tokenizer::{MaskedBatch, TokenSequence};

/// Probabilities are clamped here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Output of [`forward_sp`] plus what [`backward_sp`] needs.
#[derive(Debug, Clone)]
pub struct SpForward<T> {
    /// `[p(non-synonym), p(synonym)]` per sequence.
    pub class_probs: Vec<[T; 2]>,
    encoder: EncoderCache<T>,
    cls: Vec<T>,
    pooled: Vec<T>,
    head_drop: Option<Vec<T>>,
    head_input: Vec<T>,
}

impl<T: Scalar> SpForward<T> {
    pub fn prob_synonym(&self, i: usize) -> T {
        self.class_probs[i][1]
    }

    pub fn probs(&self) -> Vec<f64> {
        self.class_probs.iter().map(|p| p[1].to_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn len(&self) -> usize {
        self.class_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_probs.is_empty()
    }

    /// Mean cross-entropy against `labels`.
    pub fn loss(&self, labels: &[bool]) -> f64 {
        let total: f64 = self.probs().iter().zip(labels).map(|(&p, &y)| sp_loss(p, y)).sum();
        total / labels.len() as f64
    }

    /// Attention weights of `layer` for sequence `s`, laid out `heads × n × n`.
    pub fn attention_probs(&self, layer: usize, s: usize) -> &[T] {
        self.encoder.attention_probs(layer, s)
    }
}

/// Runs the encoder and synonymy head over a batch of packed pair inputs.
pub fn forward_sp<T: Scalar>(
    params: &ModelParams<T>,
    seqs: &[TokenSequence],
    mode: Mode,
) -> Result<SpForward<T>, ModelError> {
    let cfg = &params.config;
    let h = cfg.hidden_size;
    let packed = Packed::new(seqs, cfg.vocab_size, cfg.max_positions)?;
    let mut dropout = Dropout::new(mode, cfg.dropout);
    let encoder = encoder_forward(params, packed, &mut dropout);
    let n = encoder.packed.num_seqs();
    let mut cls = Vec::with_capacity(n * h);
    for s in 0..n {
        let o = encoder.packed.offsets[s] * h;
        cls.extend_from_slice(&encoder.hidden[o..o + h]);
    }
    let pooled = match (&params.pooler, cfg.pooling) {
        (Some(pooler), ClsPooling::Tanh) => linear(&cls, pooler).into_iter().map(|x| x.tanh()).collect(),
        _ => cls.clone(),
    };
    let head_drop = dropout.mask::<T>(n * h);
    let mut head_input = pooled.clone();
    apply_mask(&mut head_input, &head_drop);
    let logits = linear(&head_input, &params.sp_head);
    let class_probs = logits
        .chunks_exact(2)
        .map(|l| {
            // two-way softmax as a logistic on the logit gap
            let p1 = T::one() / (T::one() + (l[0] - l[1]).exp());
            [T::one() - p1, p1]
        })
        .collect();
    Ok(SpForward {
        class_probs,
        encoder,
        cls,
        pooled,
        head_drop,
        head_input,
    })
}

/// Gradients of the mean SP cross-entropy over the batch.
pub fn backward_sp<T: Scalar>(params: &ModelParams<T>, fwd: &SpForward<T>, labels: &[bool]) -> Gradients<T> {
    let mut grads = params.zeros_like();
    accumulate_sp(params, fwd, labels, fwd.len(), &mut grads);
    grads
}

/// Adds the gradient of `sum(loss) / denom` into `grads`.
pub fn accumulate_sp<T: Scalar>(
    params: &ModelParams<T>,
    fwd: &SpForward<T>,
    labels: &[bool],
    denom: usize,
    grads: &mut Gradients<T>,
) {
    assert_eq!(labels.len(), fwd.len(), "one label per sequence");
    let h = params.config.hidden_size;
    let inv = cast::<T>(1.0 / denom as f64);
    let mut dlogits = Vec::with_capacity(fwd.len() * 2);
    for (p, &y) in fwd.class_probs.iter().zip(labels) {
        let target = if y { [T::zero(), T::one()] } else { [T::one(), T::zero()] };
        dlogits.push((p[0] - target[0]) * inv);
        dlogits.push((p[1] - target[1]) * inv);
    }
    let mut dpooled = linear_backward(&fwd.head_input, &dlogits, &params.sp_head, &mut grads.sp_head, true).unwrap();
    apply_mask(&mut dpooled, &fwd.head_drop);
    let dcls = match (&params.pooler, &mut grads.pooler) {
        (Some(pooler), Some(gpool)) => {
            for (d, &y) in dpooled.iter_mut().zip(&fwd.pooled) {
                *d *= T::one() - y * y;
            }
            linear_backward(&fwd.cls, &dpooled, pooler, gpool, true).unwrap()
        }
        _ => dpooled,
    };
    let packed = &fwd.encoder.packed;
    let mut dhidden = vec![T::zero(); packed.rows() * h];
    for s in 0..packed.num_seqs() {
        let o = packed.offsets[s] * h;
        dhidden[o..o + h].copy_from_slice(&dcls[s * h..(s + 1) * h]);
    }
    encoder_backward(params, &fwd.encoder, dhidden, grads);
}

/// One masked position in a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlmTarget {
    pub sequence: usize,
    pub position: usize,
    pub label: u32,
}

#[derive(Debug, Clone)]
pub struct MlmForward<T> {
    /// `targets.len() × V`, one distribution per masked position.
    pub distributions: Vec<T>,
    pub targets: Vec<MlmTarget>,
    pub vocab_size: usize,
    encoder: EncoderCache<T>,
    rows: Vec<usize>,
    gathered: Vec<T>,
    pre: Vec<T>,
    ln: LnCache<T>,
}

impl<T: Scalar> MlmForward<T> {
    pub fn distribution(&self, i: usize) -> &[T] {
        &self.distributions[i * self.vocab_size..(i + 1) * self.vocab_size]
    }

    /// Final encoder hidden state at masked position `i`.
    pub fn target_hidden(&self, i: usize) -> &[T] {
        let h = self.gathered.len() / self.targets.len();
        &self.gathered[i * h..(i + 1) * h]
    }

    pub fn loss(&self) -> f64 {
        let labels: Vec<u32> = self.targets.iter().map(|t| t.label).collect();
        mlm_loss(&self.distributions, self.vocab_size, &labels)
    }
}

pub fn forward_mlm<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[MaskedBatch],
    mode: Mode,
) -> Result<MlmForward<T>, ModelError> {
    let cfg = &params.config;
    let (h, v) = (cfg.hidden_size, cfg.vocab_size);
    let mut targets = Vec::new();
    for (s, mb) in batch.iter().enumerate() {
        if mb.labels.len() != mb.input.len() {
            return Err(ModelError::MalformedInput("labels and input differ in length".into()));
        }
        for (position, label) in mb.labels.iter().enumerate() {
            if let Some(label) = *label {
                if label as usize >= v {
                    return Err(ModelError::MalformedInput(format!("label {label} outside vocabulary of {v}")));
                }
                targets.push(MlmTarget { sequence: s, position, label });
            }
        }
    }
    if targets.is_empty() {
        return Err(ModelError::NoMlmTargets);
    }
    let packed = Packed::new(batch.iter().map(|b| &b.input), v, cfg.max_positions)?;
    let mut dropout = Dropout::new(mode, cfg.dropout);
    let encoder = encoder_forward(params, packed, &mut dropout);
    let rows: Vec<usize> = targets
        .iter()
        .map(|t| encoder.packed.offsets[t.sequence] + t.position)
        .collect();
    let mut gathered = Vec::with_capacity(rows.len() * h);
    for &r in &rows {
        gathered.extend_from_slice(&encoder.hidden[r * h..(r + 1) * h]);
    }
    let pre = linear(&gathered, &params.mlm_transform);
    let act: Vec<T> = pre.iter().map(|&x| gelu(x)).collect();
    let ln = layer_norm(&act, h, &params.mlm_norm, cfg.layer_norm_eps);
    let m = rows.len();
    let mut distributions = Vec::with_capacity(m * v);
    for _ in 0..m {
        distributions.extend_from_slice(&params.mlm_bias);
    }
    super::scalar::gemm(
        m, h, v, T::one(),
        &ln.out, super::scalar::View::rows(0, h),
        &params.word_emb, super::scalar::View::transposed(0, h),
        T::one(),
        &mut distributions, super::scalar::View::rows(0, v),
    );
    for row in distributions.chunks_exact_mut(v) {
        softmax(row);
    }
    Ok(MlmForward {
        distributions,
        targets,
        vocab_size: v,
        encoder,
        rows,
        gathered,
        pre,
        ln,
    })
}

/// Gradients of the mean MLM cross-entropy over all masked positions.
pub fn backward_mlm<T: Scalar>(params: &ModelParams<T>, fwd: &MlmForward<T>) -> Gradients<T> {
    let mut grads = params.zeros_like();
    accumulate_mlm(params, fwd, fwd.targets.len(), &mut grads);
    grads
}

/// Adds the gradient of `sum(loss) / denom` into `grads`.
pub fn accumulate_mlm<T: Scalar>(params: &ModelParams<T>, fwd: &MlmForward<T>, denom: usize, grads: &mut Gradients<T>) {
    use super::scalar::{gemm, View};
    let cfg = &params.config;
    let (h, v) = (cfg.hidden_size, cfg.vocab_size);
    let m = fwd.targets.len();
    let inv = cast::<T>(1.0 / denom as f64);
    let mut dlogits: Vec<T> = fwd.distributions.iter().map(|&p| p * inv).collect();
    for (i, t) in fwd.targets.iter().enumerate() {
        dlogits[i * v + t.label as usize] -= inv;
    }
    for row in dlogits.chunks_exact(v) {
        for (b, &d) in grads.mlm_bias.iter_mut().zip(row) {
            *b += d;
        }
    }
    // tied decoder: logits = t · Eᵀ
    gemm(
        v, m, h, T::one(),
        &dlogits, View::transposed(0, v),
        &fwd.ln.out, View::rows(0, h),
        T::one(),
        &mut grads.word_emb, View::rows(0, h),
    );
    let mut dt = vec![T::zero(); m * h];
    gemm(
        m, v, h, T::one(),
        &dlogits, View::rows(0, v),
        &params.word_emb, View::rows(0, h),
        T::zero(),
        &mut dt, View::rows(0, h),
    );
    let mut dact = layer_norm_backward(&dt, &fwd.ln, h, &params.mlm_norm, &mut grads.mlm_norm);
    for (d, &x) in dact.iter_mut().zip(&fwd.pre) {
        *d *= gelu_grad(x);
    }
    let dg = linear_backward(&fwd.gathered, &dact, &params.mlm_transform, &mut grads.mlm_transform, true).unwrap();
    let mut dhidden = vec![T::zero(); fwd.encoder.packed.rows() * h];
    for (i, &r) in fwd.rows.iter().enumerate() {
        for j in 0..h {
            dhidden[r * h + j] += dg[i * h + j];
        }
    }
    encoder_backward(params, &fwd.encoder, dhidden, grads);
}

/// `-ln p(true class)` with `p(synonym) = prob`, clamped at [`PROB_FLOOR`].
pub fn sp_loss(prob: f64, label: bool) -> f64 {
    let p = if label { prob } else { 1.0 - prob };
    -p.max(PROB_FLOOR).ln()
}

/// Mean `-ln p(true token)` over rows of `distributions` (each `vocab` wide).
pub fn mlm_loss<T: Scalar>(distributions: &[T], vocab: usize, labels: &[u32]) -> f64 {
    assert_eq!(distributions.len(), labels.len() * vocab, "one distribution per label");
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let p = distributions[i * vocab + y as usize].to_f64().unwrap_or(0.0);
            -p.max(PROB_FLOOR).ln()
        })
        .sum();
    total / labels.len() as f64
}
