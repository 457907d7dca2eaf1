//! Packed encoder: dense ops run over every row of the batch at once,
//! attention runs per sequence with masked keys.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{EncoderLayer, Linear, ModelParams, Norm};
use super::scalar::{cast, gelu, gelu_grad, gemm, Scalar, View};
use super::ModelError;
use crate::rng::rng_from_seed;
use crate::tokenizer::TokenSequence;

/// Whether dropout is active, and how it is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

impl Mode {
    pub fn is_train(self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

/// Concatenated rows of a batch.
#[derive(Debug, Clone)]
pub(crate) struct Packed {
    pub ids: Vec<u32>,
    pub segments: Vec<u8>,
    pub positions: Vec<usize>,
    pub key_valid: Vec<bool>,
    /// `offsets[s]..offsets[s + 1]` are the rows of sequence `s`.
    pub offsets: Vec<usize>,
}

impl Packed {
    pub fn new<'a>(
        seqs: impl IntoIterator<Item = &'a TokenSequence>,
        vocab_size: usize,
        max_positions: usize,
    ) -> Result<Self, ModelError> {
        let mut p = Packed {
            ids: Vec::new(),
            segments: Vec::new(),
            positions: Vec::new(),
            key_valid: Vec::new(),
            offsets: vec![0],
        };
        for seq in seqs {
            let n = seq.len();
            if n > max_positions {
                return Err(ModelError::SequenceTooLong { len: n, max: max_positions });
            }
            if seq.attention_mask.len() != n || seq.segment_ids.len() != n {
                return Err(ModelError::MalformedInput("mask or segment length differs from ids".into()));
            }
            if !seq.attention_mask.contains(&1) {
                return Err(ModelError::MalformedInput("sequence has no unmasked positions".into()));
            }
            for i in 0..n {
                let id = seq.ids[i];
                if id as usize >= vocab_size {
                    return Err(ModelError::MalformedInput(format!(
                        "token id {id} outside vocabulary of {vocab_size}"
                    )));
                }
                if seq.segment_ids[i] > 1 {
                    return Err(ModelError::MalformedInput(format!("segment id {}", seq.segment_ids[i])));
                }
                p.ids.push(id);
                p.segments.push(seq.segment_ids[i]);
                p.positions.push(i);
                p.key_valid.push(seq.attention_mask[i] == 1);
            }
            p.offsets.push(p.ids.len());
        }
        if p.offsets.len() == 1 {
            return Err(ModelError::MalformedInput("empty batch".into()));
        }
        Ok(p)
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn num_seqs(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// Draws inverted-dropout scale vectors in a fixed order.
pub(crate) struct Dropout {
    rng: Option<ChaCha8Rng>,
    p: f64,
}

impl Dropout {
    pub fn new(mode: Mode, p: f64) -> Self {
        let rng = match mode {
            Mode::Train { seed } if p > 0.0 => Some(rng_from_seed(seed)),
            _ => None,
        };
        Self { rng, p }
    }

    /// `None` when dropout is off; otherwise each entry is 0 or `1/(1-p)`.
    pub fn mask<T: Scalar>(&mut self, n: usize) -> Option<Vec<T>> {
        let rng = self.rng.as_mut()?;
        let keep = cast::<T>(1.0 / (1.0 - self.p));
        let p = self.p;
        Some(
            (0..n)
                .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
                .collect(),
        )
    }
}

pub(crate) fn apply_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, &s) in x.iter_mut().zip(m) {
            *v *= s;
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub out: Vec<T>,
}

pub(crate) fn layer_norm<T: Scalar>(x: &[T], h: usize, norm: &Norm<T>, eps: f64) -> LnCache<T> {
    let rows = x.len() / h;
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    let mut inv_std = vec![T::zero(); rows];
    let hn = cast::<T>(h as f64);
    let eps = cast::<T>(eps);
    for r in 0..rows {
        let row = &x[r * h..(r + 1) * h];
        let mean = row.iter().copied().sum::<T>() / hn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / hn;
        let is = T::one() / (var + eps).sqrt();
        inv_std[r] = is;
        for j in 0..h {
            let xh = (row[j] - mean) * is;
            xhat[r * h + j] = xh;
            out[r * h + j] = norm.gamma[j] * xh + norm.beta[j];
        }
    }
    LnCache { xhat, inv_std, out }
}

pub(crate) fn layer_norm_backward<T: Scalar>(
    dout: &[T],
    cache: &LnCache<T>,
    h: usize,
    norm: &Norm<T>,
    grad: &mut Norm<T>,
) -> Vec<T> {
    let rows = dout.len() / h;
    let mut dx = vec![T::zero(); dout.len()];
    let hn = cast::<T>(h as f64);
    let mut g = vec![T::zero(); h];
    for r in 0..rows {
        let d = &dout[r * h..(r + 1) * h];
        let xh = &cache.xhat[r * h..(r + 1) * h];
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for j in 0..h {
            grad.gamma[j] += d[j] * xh[j];
            grad.beta[j] += d[j];
            g[j] = d[j] * norm.gamma[j];
            sum_g += g[j];
            sum_gx += g[j] * xh[j];
        }
        let mg = sum_g / hn;
        let mgx = sum_gx / hn;
        let is = cache.inv_std[r];
        for j in 0..h {
            dx[r * h + j] = is * (g[j] - mg - xh[j] * mgx);
        }
    }
    dx
}

pub(crate) fn linear<T: Scalar>(x: &[T], lin: &Linear<T>) -> Vec<T> {
    let rows = x.len() / lin.d_in;
    let mut out = Vec::with_capacity(rows * lin.d_out);
    for _ in 0..rows {
        out.extend_from_slice(&lin.bias);
    }
    gemm(
        rows, lin.d_in, lin.d_out, T::one(),
        x, View::rows(0, lin.d_in),
        &lin.weight, View::rows(0, lin.d_out),
        T::one(),
        &mut out, View::rows(0, lin.d_out),
    );
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when asked.
pub(crate) fn linear_backward<T: Scalar>(
    x: &[T],
    dout: &[T],
    lin: &Linear<T>,
    grad: &mut Linear<T>,
    want_dx: bool,
) -> Option<Vec<T>> {
    let rows = x.len() / lin.d_in;
    gemm(
        lin.d_in, rows, lin.d_out, T::one(),
        x, View::transposed(0, lin.d_in),
        dout, View::rows(0, lin.d_out),
        T::one(),
        &mut grad.weight, View::rows(0, lin.d_out),
    );
    for r in 0..rows {
        for (b, &d) in grad.bias.iter_mut().zip(&dout[r * lin.d_out..(r + 1) * lin.d_out]) {
            *b += d;
        }
    }
    want_dx.then(|| {
        let mut dx = vec![T::zero(); rows * lin.d_in];
        gemm(
            rows, lin.d_out, lin.d_in, T::one(),
            dout, View::rows(0, lin.d_out),
            &lin.weight, View::transposed(0, lin.d_out),
            T::zero(),
            &mut dx, View::rows(0, lin.d_in),
        );
        dx
    })
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache<T> {
    input: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Per sequence, `heads × n × n` softmax outputs before dropout.
    probs: Vec<Vec<T>>,
    prob_masks: Vec<Option<Vec<T>>>,
    ctx: Vec<T>,
    attn_drop: Option<Vec<T>>,
    ln1: LnCache<T>,
    ffn_pre: Vec<T>,
    ffn_act: Vec<T>,
    ffn_drop: Option<Vec<T>>,
    ln2: LnCache<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderCache<T> {
    pub packed: Packed,
    emb_ln: LnCache<T>,
    emb_drop: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    /// Final hidden states, `rows × H`.
    pub hidden: Vec<T>,
}

impl<T: Scalar> EncoderCache<T> {
    /// Attention weights of one layer for sequence `s`, laid out `heads × n × n`.
    pub fn attention_probs(&self, layer: usize, s: usize) -> &[T] {
        &self.layers[layer].probs[s]
    }
}

pub(crate) fn encoder_forward<T: Scalar>(
    params: &ModelParams<T>,
    packed: Packed,
    dropout: &mut Dropout,
) -> EncoderCache<T> {
    let cfg = &params.config;
    let h = cfg.hidden_size;
    let rows = packed.rows();
    let mut x = vec![T::zero(); rows * h];
    for r in 0..rows {
        let tok = packed.ids[r] as usize * h;
        let seg = packed.segments[r] as usize * h;
        let pos = packed.positions[r] * h;
        for j in 0..h {
            x[r * h + j] = params.word_emb[tok + j] + params.segment_emb[seg + j] + params.position_emb[pos + j];
        }
    }
    let emb_ln = layer_norm(&x, h, &params.emb_norm, cfg.layer_norm_eps);
    let emb_drop = dropout.mask::<T>(rows * h);
    let mut hidden = emb_ln.out.clone();
    apply_mask(&mut hidden, &emb_drop);

    let mut layers = Vec::with_capacity(cfg.num_layers);
    for layer in &params.layers {
        let cache = layer_forward(layer, hidden, &packed, cfg.num_heads, cfg.layer_norm_eps, dropout);
        hidden = cache.ln2.out.clone();
        layers.push(cache);
    }
    EncoderCache {
        packed,
        emb_ln,
        emb_drop,
        layers,
        hidden,
    }
}

fn layer_forward<T: Scalar>(
    layer: &EncoderLayer<T>,
    input: Vec<T>,
    packed: &Packed,
    heads: usize,
    eps: f64,
    dropout: &mut Dropout,
) -> LayerCache<T> {
    let h = layer.query.d_in;
    let dh = h / heads;
    let scale = cast::<T>(1.0 / (dh as f64).sqrt());
    let q = linear(&input, &layer.query);
    let k = linear(&input, &layer.key);
    let v = linear(&input, &layer.value);
    let rows = packed.rows();
    let mut ctx = vec![T::zero(); rows * h];
    let mut probs = Vec::with_capacity(packed.num_seqs());
    let mut prob_masks = Vec::with_capacity(packed.num_seqs());
    let mut dropped = Vec::new();
    for s in 0..packed.num_seqs() {
        let o = packed.offsets[s];
        let n = packed.offsets[s + 1] - o;
        let valid = &packed.key_valid[o..o + n];
        let mut p = vec![T::zero(); heads * n * n];
        for hd in 0..heads {
            let col = o * h + hd * dh;
            let block = &mut p[hd * n * n..(hd + 1) * n * n];
            gemm(
                n, dh, n, scale,
                &q, View::strided(col, h, 1),
                &k, View::strided(col, 1, h),
                T::zero(),
                block, View::rows(0, n),
            );
            for i in 0..n {
                softmax_masked(&mut block[i * n..(i + 1) * n], valid);
            }
        }
        let mask = dropout.mask::<T>(heads * n * n);
        let used: &[T] = match &mask {
            Some(m) => {
                dropped.clear();
                dropped.extend(p.iter().zip(m).map(|(&a, &b)| a * b));
                &dropped
            }
            None => &p,
        };
        for hd in 0..heads {
            let col = o * h + hd * dh;
            gemm(
                n, n, dh, T::one(),
                used, View::rows(hd * n * n, n),
                &v, View::strided(col, h, 1),
                T::zero(),
                &mut ctx, View::strided(col, h, 1),
            );
        }
        probs.push(p);
        prob_masks.push(mask);
    }
    let mut attn = linear(&ctx, &layer.attn_out);
    let attn_drop = dropout.mask::<T>(rows * h);
    apply_mask(&mut attn, &attn_drop);
    for (a, &x) in attn.iter_mut().zip(&input) {
        *a += x;
    }
    let ln1 = layer_norm(&attn, h, &layer.attn_norm, eps);
    let ffn_pre = linear(&ln1.out, &layer.ffn_in);
    let ffn_act: Vec<T> = ffn_pre.iter().map(|&x| gelu(x)).collect();
    let mut ffn = linear(&ffn_act, &layer.ffn_out);
    let ffn_drop = dropout.mask::<T>(rows * h);
    apply_mask(&mut ffn, &ffn_drop);
    for (a, &x) in ffn.iter_mut().zip(&ln1.out) {
        *a += x;
    }
    let ln2 = layer_norm(&ffn, h, &layer.ffn_norm, eps);
    LayerCache {
        input,
        q,
        k,
        v,
        probs,
        prob_masks,
        ctx,
        attn_drop,
        ln1,
        ffn_pre,
        ffn_act,
        ffn_drop,
        ln2,
    }
}

/// In-place softmax over the valid entries; invalid entries become exactly 0.
pub(crate) fn softmax_masked<T: Scalar>(row: &mut [T], valid: &[bool]) {
    let mut max = T::neg_infinity();
    for (&x, &ok) in row.iter().zip(valid) {
        if ok && x > max {
            max = x;
        }
    }
    let mut sum = T::zero();
    for (x, &ok) in row.iter_mut().zip(valid) {
        if ok {
            *x = (*x - max).exp();
            sum += *x;
        } else {
            *x = T::zero();
        }
    }
    let inv = T::one() / sum;
    for x in row.iter_mut() {
        *x *= inv;
    }
}

pub(crate) fn softmax<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = T::one() / sum;
    for x in row.iter_mut() {
        *x *= inv;
    }
}

/// Backpropagates `dhidden` (gradient of the final hidden states) into `grads`.
pub(crate) fn encoder_backward<T: Scalar>(
    params: &ModelParams<T>,
    cache: &EncoderCache<T>,
    dhidden: Vec<T>,
    grads: &mut ModelParams<T>,
) {
    let cfg = &params.config;
    let h = cfg.hidden_size;
    let mut d = dhidden;
    for (l, lc) in cache.layers.iter().enumerate().rev() {
        d = layer_backward(&params.layers[l], lc, &cache.packed, cfg.num_heads, d, &mut grads.layers[l]);
    }
    apply_mask(&mut d, &cache.emb_drop);
    let dx = layer_norm_backward(&d, &cache.emb_ln, h, &params.emb_norm, &mut grads.emb_norm);
    let p = &cache.packed;
    for r in 0..p.rows() {
        let tok = p.ids[r] as usize * h;
        let seg = p.segments[r] as usize * h;
        let pos = p.positions[r] * h;
        for j in 0..h {
            let g = dx[r * h + j];
            grads.word_emb[tok + j] += g;
            grads.segment_emb[seg + j] += g;
            grads.position_emb[pos + j] += g;
        }
    }
}

fn layer_backward<T: Scalar>(
    layer: &EncoderLayer<T>,
    c: &LayerCache<T>,
    packed: &Packed,
    heads: usize,
    dout: Vec<T>,
    g: &mut EncoderLayer<T>,
) -> Vec<T> {
    let h = layer.query.d_in;
    let dh = h / heads;
    let scale = cast::<T>(1.0 / (dh as f64).sqrt());

    let dsum2 = layer_norm_backward(&dout, &c.ln2, h, &layer.ffn_norm, &mut g.ffn_norm);
    let mut dffn = dsum2.clone();
    apply_mask(&mut dffn, &c.ffn_drop);
    let mut dact = linear_backward(&c.ffn_act, &dffn, &layer.ffn_out, &mut g.ffn_out, true).unwrap();
    for (da, &x) in dact.iter_mut().zip(&c.ffn_pre) {
        *da *= gelu_grad(x);
    }
    let mut dh1 = linear_backward(&c.ln1.out, &dact, &layer.ffn_in, &mut g.ffn_in, true).unwrap();
    for (a, &b) in dh1.iter_mut().zip(&dsum2) {
        *a += b;
    }

    let dsum1 = layer_norm_backward(&dh1, &c.ln1, h, &layer.attn_norm, &mut g.attn_norm);
    let mut dattn = dsum1.clone();
    apply_mask(&mut dattn, &c.attn_drop);
    let dctx = linear_backward(&c.ctx, &dattn, &layer.attn_out, &mut g.attn_out, true).unwrap();

    let rows = packed.rows();
    let mut dq = vec![T::zero(); rows * h];
    let mut dk = vec![T::zero(); rows * h];
    let mut dv = vec![T::zero(); rows * h];
    let mut used = Vec::new();
    let mut dp = Vec::new();
    for s in 0..packed.num_seqs() {
        let o = packed.offsets[s];
        let n = packed.offsets[s + 1] - o;
        let probs = &c.probs[s];
        let mask = &c.prob_masks[s];
        for hd in 0..heads {
            let col = o * h + hd * dh;
            let p = &probs[hd * n * n..(hd + 1) * n * n];
            used.clear();
            match mask {
                Some(m) => used.extend(p.iter().zip(&m[hd * n * n..(hd + 1) * n * n]).map(|(&a, &b)| a * b)),
                None => used.extend_from_slice(p),
            }
            dp.clear();
            dp.resize(n * n, T::zero());
            gemm(
                n, dh, n, T::one(),
                &dctx, View::strided(col, h, 1),
                &c.v, View::strided(col, 1, h),
                T::zero(),
                &mut dp, View::rows(0, n),
            );
            gemm(
                n, n, dh, T::one(),
                &used, View::transposed(0, n),
                &dctx, View::strided(col, h, 1),
                T::one(),
                &mut dv, View::strided(col, h, 1),
            );
            if let Some(m) = mask {
                for (x, &s) in dp.iter_mut().zip(&m[hd * n * n..(hd + 1) * n * n]) {
                    *x *= s;
                }
            }
            for i in 0..n {
                let pr = &p[i * n..(i + 1) * n];
                let dr = &mut dp[i * n..(i + 1) * n];
                let dot = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum::<T>();
                for (x, &pv) in dr.iter_mut().zip(pr) {
                    *x = pv * (*x - dot) * scale;
                }
            }
            gemm(
                n, n, dh, T::one(),
                &dp, View::rows(0, n),
                &c.k, View::strided(col, h, 1),
                T::one(),
                &mut dq, View::strided(col, h, 1),
            );
            gemm(
                n, n, dh, T::one(),
                &dp, View::transposed(0, n),
                &c.q, View::strided(col, h, 1),
                T::one(),
                &mut dk, View::strided(col, h, 1),
            );
        }
    }
    let mut dx = dsum1;
    for (lin, glin, dy) in [
        (&layer.query, &mut g.query, &dq),
        (&layer.key, &mut g.key, &dk),
        (&layer.value, &mut g.value, &dv),
    ] {
        let part = linear_backward(&c.input, dy, lin, glin, true).unwrap();
        for (a, b) in dx.iter_mut().zip(part) {
            *a += b;
        }
    }
    dx
}
