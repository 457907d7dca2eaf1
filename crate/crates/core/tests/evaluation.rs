use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synonymy::corpus::{Atom, AtomPair, AtomTable, PairSet, Provenance};
use synonymy::evaluation::{
    bin_by_jaccard, bin_index, classify_pairs, compute_metrics, contingency_table, jaccard_baseline, mcnemar,
    mcnemar_from_table, read_predictions, sweep_jaccard_threshold, write_predictions, ClassifyOptions, Confusion,
    EvalError, McNemarResult, MetricsReport, Prediction, PredictionSet,
};
use synonymy::model::{init_params, ModelConfig};
use synonymy::tokenizer::train_wordpiece;

fn pred(i: usize, label: bool, prob: f64) -> Prediction {
    Prediction {
        aui1: format!("A{:08}", 2 * i),
        aui2: format!("A{:08}", 2 * i + 1),
        label,
        prob,
    }
}

fn set_from(rows: &[(bool, bool)]) -> PredictionSet {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, &(truth, predicted))| pred(i, truth, if predicted { 0.9 } else { 0.1 }))
        .collect();
    PredictionSet::new(records, 0.5).unwrap()
}

fn fixture() -> PredictionSet {
    let mut rows = vec![(true, true); 2];
    rows.push((false, true));
    rows.push((true, false));
    rows.extend(vec![(false, false); 6]);
    set_from(&rows)
}

#[test]
fn hand_computed_metrics() {
    let m = compute_metrics(&fixture()).unwrap();
    assert_eq!(m.counts, Confusion { tp: 2, fp: 1, tn: 6, fn_: 1 });
    assert_eq!(m.precision, 2.0 / 3.0);
    assert_eq!(m.recall, 2.0 / 3.0);
    assert_eq!(m.f1, 2.0 / 3.0);
    assert_eq!(m.accuracy, 0.8);
    assert!(m.precision_defined && m.recall_defined && m.f1_defined && m.accuracy_defined);
    assert_eq!(m.threshold, 0.5);
}

#[test]
fn perfect_and_degenerate_classifiers() {
    let m = compute_metrics(&set_from(&[(true, true), (false, false), (true, true)])).unwrap();
    assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));

    let m = compute_metrics(&set_from(&[(true, false), (false, false)])).unwrap();
    assert!(!m.precision_defined);
    assert_eq!(m.precision, 0.0);
    assert!(m.recall_defined);
    assert_eq!(m.recall, 0.0);
    assert!(!m.f1_defined);
    assert_eq!(m.f1, 0.0);
    assert!(m.to_text().contains("(undefined)"));
    assert!(!m.to_json().contains("NaN"));

    assert!(matches!(compute_metrics(&set_from(&[])), Err(EvalError::Empty)));
}

#[test]
fn threshold_boundary_counts_as_synonym() {
    let s = PredictionSet::new(vec![pred(0, true, 0.5), pred(1, false, 0.4999999)], 0.5).unwrap();
    assert!(s.predicted(0));
    assert!(!s.predicted(1));
    assert!(PredictionSet::new(vec![pred(0, true, 1.5)], 0.5).is_err());
}

#[test]
fn bin_edges() {
    assert_eq!(bin_index(0.0), 0);
    assert_eq!(bin_index(0.35), 3);
    assert_eq!(bin_index(0.0999), 0);
    assert_eq!(bin_index(0.1), 1);
    assert_eq!(bin_index(0.9), 9);
    assert_eq!(bin_index(1.0), 9);
}

fn word_table(texts: &[String]) -> AtomTable {
    AtomTable::new(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Atom {
                aui: format!("A{i:08}"),
                cui: format!("C{:07}", i / 2),
                text: t.clone(),
                source: "MSH".into(),
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bins_partition_the_aggregate(
        rows in prop::collection::vec(
            (prop::collection::vec(0u8..6, 1..5), prop::collection::vec(0u8..6, 1..5), any::<bool>(), 0.0f64..=1.0),
            1..60,
        ),
        threshold in 0.0f64..=1.0,
    ) {
        let mut texts = Vec::new();
        let mut records = Vec::new();
        for (i, (a, b, label, prob)) in rows.iter().enumerate() {
            let words = |ws: &Vec<u8>| ws.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" ");
            texts.push(words(a));
            texts.push(words(b));
            records.push(pred(i, *label, *prob));
        }
        let table = word_table(&texts);
        let preds = PredictionSet::new(records, threshold).unwrap();
        let report = bin_by_jaccard(&preds, &table).unwrap();
        let aggregate = compute_metrics(&preds).unwrap();
        let summed = report.bins.iter().fold(Confusion::default(), |acc, b| acc.merge(b.metrics.counts));
        prop_assert_eq!(summed, aggregate.counts);
        prop_assert_eq!(report.bins.iter().map(|b| b.count).sum::<u64>(), preds.len() as u64);
        prop_assert_eq!(report.overall, aggregate);
        prop_assert_eq!(report.to_csv().lines().count(), 11);
    }

    #[test]
    fn mcnemar_is_symmetric(rows in prop::collection::vec((any::<bool>(), 0.0f64..=1.0, 0.0f64..=1.0), 1..200)) {
        let a = PredictionSet::new(rows.iter().enumerate().map(|(i, r)| pred(i, r.0, r.1)).collect(), 0.5).unwrap();
        let b = PredictionSet::new(rows.iter().enumerate().map(|(i, r)| pred(i, r.0, r.2)).collect(), 0.5).unwrap();
        let ab = mcnemar(&a, &b, true).unwrap();
        let ba = mcnemar(&b, &a, true).unwrap();
        prop_assert_eq!((ab.b, ab.c), (ba.c, ba.b));
        prop_assert_eq!(ab.statistic, ba.statistic);
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert!(ab.statistic >= 0.0);
    }
}

#[test]
fn mcnemar_hand_values() {
    let r = McNemarResult::from_counts(3, 5, true);
    assert_eq!(r.statistic, 0.125);
    let r = McNemarResult::from_counts(7, 7, true);
    assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    let r = McNemarResult::from_counts(0, 0, true);
    assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    // |b - c| = 1 clamps to zero under the correction
    assert_eq!(McNemarResult::from_counts(4, 5, true).statistic, 0.0);
    let r = McNemarResult::from_counts(3, 5, false);
    assert_eq!(r.statistic, 0.5);
    // chi-square(1) survival at 3.841459 is 0.05
    let r = McNemarResult::from_counts(0, 0, false);
    assert_eq!(r.p_value, 1.0);
    let p = libm::erfc((3.841_458_820_694_124f64 / 2.0).sqrt());
    assert!((p - 0.05).abs() < 1e-9);
}

#[test]
fn mcnemar_from_prediction_sets() {
    // A right/B wrong on 3 pairs, A wrong/B right on 5, agreement elsewhere
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..20 {
        let (pa, pb) = match i {
            0..=2 => (0.9, 0.1),
            3..=7 => (0.1, 0.9),
            _ => (0.8, 0.7),
        };
        a.push(pred(i, true, pa));
        b.push(pred(i, true, pb));
    }
    b.reverse();
    let a = PredictionSet::new(a, 0.5).unwrap();
    let b = PredictionSet::new(b, 0.5).unwrap();
    let r = mcnemar(&a, &b, true).unwrap();
    assert_eq!((r.b, r.c, r.statistic), (3, 5, 0.125));
}

#[test]
fn streamed_and_tabulated_mcnemar_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 10_000;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let label = rng.random_bool(0.3);
        a.push(pred(i, label, rng.random::<f64>()));
        b.push(pred(i, label, rng.random::<f64>()));
    }
    let a = PredictionSet::new(a, 0.5).unwrap();
    let b = PredictionSet::new(b, 0.5).unwrap();
    for corrected in [true, false] {
        let streamed = mcnemar(&a, &b, corrected).unwrap();
        let table = contingency_table(&a, &b).unwrap();
        assert_eq!(table.iter().flatten().sum::<u64>(), n as u64);
        assert_eq!(streamed, mcnemar_from_table(&table, corrected));
    }
}

#[test]
fn mcnemar_reports_first_divergent_key() {
    let a = PredictionSet::new(vec![pred(0, true, 0.9), pred(1, true, 0.9), pred(2, true, 0.9)], 0.5).unwrap();
    let b = PredictionSet::new(vec![pred(0, true, 0.9), pred(2, true, 0.9), pred(3, true, 0.9)], 0.5).unwrap();
    let err = mcnemar(&a, &b, true).unwrap_err();
    assert_eq!(err.to_string(), "prediction sets diverge at pair A00000002|A00000003");
    let c = PredictionSet::new(vec![pred(0, true, 0.9)], 0.5).unwrap();
    assert!(matches!(mcnemar(&a, &c, true), Err(EvalError::KeyMismatch(_))));
    let d = PredictionSet::new(vec![pred(0, false, 0.9), pred(1, true, 0.9), pred(2, true, 0.9)], 0.5).unwrap();
    assert!(matches!(mcnemar(&a, &d, true), Err(EvalError::LabelMismatch(_))));
}

fn pair_set(pairs: Vec<AtomPair>) -> PairSet {
    PairSet::new(pairs, Provenance::default())
}

#[test]
fn baseline_on_identical_and_disjoint_strings() {
    let table = word_table(&[
        "Heart attack".into(),
        "heart   ATTACK".into(),
        "renal failure".into(),
        "broken bone".into(),
    ]);
    let pairs = pair_set(vec![
        AtomPair::new("A00000000", "A00000001", true),
        AtomPair::new("A00000002", "A00000003", false),
    ]);
    for t in [0.05, 0.5, 1.0] {
        let p = jaccard_baseline(&table, &pairs, t).unwrap();
        assert!(p.predicted(0), "identical at {t}");
        assert!(!p.predicted(1), "disjoint at {t}");
    }
}

#[test]
fn sweep_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _round in 0..20 {
        let mut texts = Vec::new();
        let mut pairs = Vec::new();
        for i in 0..80 {
            let mk = |rng: &mut ChaCha8Rng| {
                (0..rng.random_range(1..5)).map(|_| format!("w{}", rng.random_range(0..6))).collect::<Vec<_>>().join(" ")
            };
            texts.push(mk(&mut rng));
            texts.push(mk(&mut rng));
            pairs.push(AtomPair::new(format!("A{:08}", 2 * i), format!("A{:08}", 2 * i + 1), rng.random_bool(0.4)));
        }
        let table = word_table(&texts);
        let pairs = pair_set(pairs);
        let result = sweep_jaccard_threshold(&table, &pairs).unwrap();

        // oracle: recount the confusion table at every threshold
        let scores: Vec<(f64, bool)> = pairs
            .pairs
            .iter()
            .map(|p| {
                let a: std::collections::BTreeSet<String> =
                    table.get(&p.aui1).unwrap().text.split_whitespace().map(str::to_lowercase).collect();
                let b: std::collections::BTreeSet<String> =
                    table.get(&p.aui2).unwrap().text.split_whitespace().map(str::to_lowercase).collect();
                let inter = a.intersection(&b).count();
                (inter as f64 / (a.len() + b.len() - inter) as f64, p.synonym)
            })
            .collect();
        let mut best = (-1.0f64, 0.0f64);
        for i in 0..=20 {
            let t = i as f64 * 0.05;
            let (mut tp, mut fp, mut fneg) = (0u32, 0u32, 0u32);
            for &(s, y) in &scores {
                let yhat = s >= t - 1e-12;
                match (y, yhat) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fneg += 1,
                    _ => {}
                }
            }
            let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64 };
            if f1 > best.0 + 1e-12 {
                best = (f1, t);
            }
        }
        assert!((result.threshold - best.1).abs() < 1e-9, "{} vs {}", result.threshold, best.1);
        assert!((result.metrics.f1 - best.0).abs() < 1e-12);
        assert_eq!(result.curve.len(), 21);
    }
}

#[test]
fn predictions_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds.tsv");
    let set = PredictionSet::new(vec![pred(0, true, 0.123456789), pred(1, false, 1.0)], 0.5).unwrap();
    write_predictions(&set, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("AUI1\tAUI2\tTRUE_LABEL\tPROB\n"));
    assert!(text.contains("A00000000\tA00000001\t1\t0.123456789\n"));
    let back = read_predictions(&path, 0.5).unwrap();
    assert_eq!(back, set);
}

fn classify_fixture() -> (AtomTable, PairSet, synonymy::tokenizer::WordPieceVocab, synonymy::model::ModelParams<f32>) {
    let texts: Vec<String> = ["Heart attack", "Myocardial infarction", "Kidney failure", "Renal failure", "Broken arm", "Fracture of arm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let table = word_table(&texts);
    let vocab = train_wordpiece(texts.iter(), 80, 1).unwrap();
    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        hidden_size: 16,
        num_heads: 2,
        intermediate_size: 32,
        ..ModelConfig::default()
    };
    let params = init_params(&cfg, 5).unwrap();
    let mut pairs = Vec::new();
    for i in 0..6 {
        for j in i + 1..6 {
            pairs.push(AtomPair::new(format!("A{i:08}"), format!("A{j:08}"), i / 2 == j / 2));
        }
    }
    (table, pair_set(pairs), vocab, params)
}

#[test]
fn classify_is_deterministic_and_respects_thresholds() {
    let (table, pairs, vocab, params) = classify_fixture();
    let opts = ClassifyOptions { chunk_size: 4, ..ClassifyOptions::default() };
    let a = classify_pairs(&params, &table, &pairs, &vocab, &opts).unwrap();
    let b = classify_pairs(&params, &table, &pairs, &vocab, &opts).unwrap();
    assert_eq!(a.to_tsv(), b.to_tsv());
    assert_eq!(a.len(), pairs.len());
    let whole = classify_pairs(&params, &table, &pairs, &vocab, &ClassifyOptions { chunk_size: 100, ..opts }).unwrap();
    for (x, y) in a.records.iter().zip(&whole.records) {
        assert!((x.prob - y.prob).abs() < 1e-6);
    }
    let all = a.with_threshold(0.0);
    assert!((0..all.len()).all(|i| all.predicted(i)));
    let none = a.with_threshold(1.0 + 1e-9);
    assert!((0..none.len()).all(|i| !none.predicted(i)));
    let m: MetricsReport = compute_metrics(&none).unwrap();
    assert_eq!(m.counts.tp + m.counts.fp, 0);
}

#[test]
fn classify_names_unknown_aui() {
    let (table, mut pairs, vocab, params) = classify_fixture();
    pairs.pairs.push(AtomPair::new("A00000001", "A99999999", false));
    let err = classify_pairs(&params, &table, &pairs, &vocab, &ClassifyOptions::default()).unwrap_err();
    assert_eq!(err.to_string(), "unknown AUI A99999999");
}
