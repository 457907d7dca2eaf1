//! Central finite differences against the analytic backward pass, in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synonymy::model::{
    backward_mlm, backward_sp, forward_mlm, forward_sp, init_params, ArrayKind, ArraySpec, ClsPooling, Mode, ModelConfig,
    ModelParams,
};
use synonymy::tokenizer::{MaskedBatch, TokenSequence};

const STEP: f64 = 1e-4;
const MAX_REL_ERR: f64 = 1e-3;

fn config(pooling: ClsPooling) -> ModelConfig {
    ModelConfig {
        vocab_size: 23,
        hidden_size: 8,
        num_layers: 2,
        num_heads: 2,
        intermediate_size: 12,
        max_positions: 10,
        dropout: 0.0,
        pooling,
        ..ModelConfig::default()
    }
}

/// Larger-than-default weights so gradients are well above rounding noise.
fn params(cfg: &ModelConfig, seed: u64) -> ModelParams<f64> {
    let mut p = init_params::<f64>(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    for (arr, spec) in p.arrays_mut().into_iter().zip(cfg.array_specs()) {
        for x in arr.iter_mut() {
            *x = match spec.kind {
                ArrayKind::Embedding | ArrayKind::Weight => *x * 15.0,
                ArrayKind::NormScale => 1.0 + rng.random_range(-0.3..0.3),
                ArrayKind::Bias | ArrayKind::NormShift => rng.random_range(-0.1..0.1),
            };
        }
    }
    p
}

fn seq(ids: &[u32], segs: &[u8], pad: usize) -> TokenSequence {
    TokenSequence {
        ids: ids.to_vec(),
        attention_mask: vec![1; ids.len()],
        segment_ids: segs.to_vec(),
    }
    .padded(pad)
}

fn sp_batch() -> (Vec<TokenSequence>, Vec<bool>) {
    (
        vec![
            seq(&[2, 7, 9, 3, 11, 3], &[0, 0, 0, 0, 1, 1], 2),
            seq(&[2, 5, 3, 6, 8, 12, 3], &[0, 0, 0, 1, 1, 1, 1], 0),
            seq(&[2, 20, 21, 3, 22, 3], &[0, 0, 0, 0, 1, 1], 1),
        ],
        vec![true, false, true],
    )
}

fn mlm_batch() -> Vec<MaskedBatch> {
    vec![
        MaskedBatch {
            input: seq(&[2, 4, 9, 10, 3], &[0; 5], 2),
            labels: vec![None, Some(7), None, Some(13), None, None, None],
        },
        MaskedBatch {
            input: seq(&[2, 14, 4, 16, 17, 3], &[0; 6], 0),
            labels: vec![None, None, Some(15), None, None, None],
        },
    ]
}

/// Picks parameter coordinates whose loss path is live under this objective,
/// covering every eligible array at least once.
fn sample_coords(p: &ModelParams<f64>, rng: &mut ChaCha8Rng, exclude: &[&str], n: usize) -> Vec<(usize, usize)> {
    let specs = p.specs();
    let candidates: Vec<usize> = (0..specs.len())
        .filter(|&i| !exclude.iter().any(|e| specs[i].name.starts_with(e)))
        .collect();
    let mut out: Vec<(usize, usize)> = candidates.iter().map(|&a| (a, pick(&specs[a], rng))).collect();
    while out.len() < n {
        let a = candidates[rng.random_range(0..candidates.len())];
        out.push((a, pick(&specs[a], rng)));
    }
    out
}

fn pick(spec: &ArraySpec, rng: &mut ChaCha8Rng) -> usize {
    const LIVE_IDS: [usize; 17] = [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 14, 16, 17, 20, 21, 22];
    let cols = *spec.shape.last().unwrap();
    match spec.name.as_str() {
        "embeddings.word" => LIVE_IDS[rng.random_range(0..LIVE_IDS.len())] * cols + rng.random_range(0..cols),
        "embeddings.position" => rng.random_range(0..6) * cols + rng.random_range(0..cols),
        _ => rng.random_range(0..spec.numel()),
    }
}

fn check(
    p: &ModelParams<f64>,
    grads: &ModelParams<f64>,
    coords: &[(usize, usize)],
    loss: impl Fn(&ModelParams<f64>) -> f64,
) {
    let specs = p.specs();
    let mut kinds = std::collections::BTreeSet::new();
    let mut worst = 0.0f64;
    let mut nontrivial = 0;
    for &(a, j) in coords {
        let analytic = grads.arrays()[a][j];
        let mut plus = p.clone();
        plus.arrays_mut()[a][j] += STEP;
        let mut minus = p.clone();
        minus.arrays_mut()[a][j] -= STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale < 1e-7 {
            (analytic - numeric).abs()
        } else {
            nontrivial += 1;
            (analytic - numeric).abs() / scale
        };
        assert!(
            rel < MAX_REL_ERR,
            "{}[{j}]: analytic {analytic:e} numeric {numeric:e} rel {rel:e}",
            specs[a].name
        );
        worst = worst.max(rel);
        kinds.insert(format!("{:?}", specs[a].kind));
    }
    assert!(nontrivial >= 25, "only {nontrivial} coordinates had a measurable gradient");
    assert_eq!(kinds.len(), 5, "all array kinds sampled: {kinds:?}");
    assert!(worst < MAX_REL_ERR);
}

#[test]
fn sp_gradients_match_finite_differences() {
    for pooling in [ClsPooling::Raw, ClsPooling::Tanh] {
        let cfg = config(pooling);
        let p = params(&cfg, 11);
        let (seqs, labels) = sp_batch();
        let fwd = forward_sp(&p, &seqs, Mode::Eval).unwrap();
        let grads = backward_sp(&p, &fwd, &labels);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let coords = sample_coords(&p, &mut rng, &["mlm."], 60);
        check(&p, &grads, &coords, |q| forward_sp(q, &seqs, Mode::Eval).unwrap().loss(&labels));
    }
}

#[test]
fn mlm_gradients_match_finite_differences() {
    let cfg = config(ClsPooling::Raw);
    let p = params(&cfg, 12);
    let batch = mlm_batch();
    let fwd = forward_mlm(&p, &batch, Mode::Eval).unwrap();
    let grads = backward_mlm(&p, &fwd);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let coords = sample_coords(&p, &mut rng, &["sp.", "pooler.", "embeddings.segment"], 60);
    check(&p, &grads, &coords, |q| forward_mlm(q, &batch, Mode::Eval).unwrap().loss());
}

#[test]
fn dropout_gradients_match_with_fixed_seed() {
    let cfg = ModelConfig { dropout: 0.2, ..config(ClsPooling::Tanh) };
    let p = params(&cfg, 13);
    let (seqs, labels) = sp_batch();
    let mode = Mode::Train { seed: 99 };
    let fwd = forward_sp(&p, &seqs, mode).unwrap();
    let grads = backward_sp(&p, &fwd, &labels);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let coords = sample_coords(&p, &mut rng, &["mlm."], 40);
    check(&p, &grads, &coords, |q| forward_sp(q, &seqs, mode).unwrap().loss(&labels));
}
