use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TOY: &str = r#"
[corpus]
literature_lines = 50

[corpus.synth]
n_concepts = 30
seed = 4

[pairs]
neg_ratio = 1.0
seed = 4

[tokenizer]
vocab_size = 300
min_pair_frequency = 1

[model]
hidden_size = 16
num_layers = 1
num_heads = 2
intermediate_size = 32
max_positions = 32

[schedule]
sp_epochs = 2
batch_size = 16
seed = 4
"#;

fn synonymy(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synonymy"))
        .current_dir(cwd)
        .env_remove("SYNONYMY_THREADS")
        .args(args)
        .output()
        .unwrap()
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = synonymy(cwd, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes the config and runs the corpus stages; returns the run dir.
fn prepared(dir: &Path, config: &str) -> PathBuf {
    std::fs::write(dir.join("exp.toml"), config).unwrap();
    for cmd in ["synth", "pairs", "split", "train-tokenizer"] {
        ok(dir, &["--config", "exp.toml", "--out-dir", "run", cmd]);
    }
    dir.join("run")
}

#[test]
fn variant_a_needs_no_mlm_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let run = prepared(dir.path(), TOY);
    let stdout = ok(dir.path(), &["--config", "exp.toml", "--out-dir", "run", "pretrain", "--variant", "A"]);
    assert!(stdout.starts_with("best epoch"));
    assert!(run.join("pretrain-A/best.ubrt").exists());
    assert!(run.join("pretrain-A/history.jsonl").exists());
    let resolved = std::fs::read_to_string(run.join("resolved-pretrain-A.toml")).unwrap();
    assert!(resolved.contains("variant = \"A\""));
    assert!(resolved.contains("vocab_size"));
}

#[test]
fn b2_without_atoms_corpus_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    prepared(dir.path(), TOY);
    let out = synonymy(dir.path(), &["--config", "exp.toml", "--out-dir", "run", "pretrain", "--variant", "B2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr(&out).trim(), "error: mlm corpus required for B2");
    let out = synonymy(dir.path(), &["--config", "exp.toml", "--out-dir", "run", "pretrain", "--variant", "init"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2_and_runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[pairs]\nneg_ratio = 1.0\ncolour = 3\n").unwrap();
    let out = synonymy(dir.path(), &["--config", "bad.toml", "pairs"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown field `colour`"));

    std::fs::write(dir.path().join("empty.toml"), "").unwrap();
    let out = synonymy(dir.path(), &["--config", "empty.toml", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr(&out).trim(), "error: config has no [corpus] section");

    std::fs::write(dir.path().join("vs.toml"), "[model]\nvocab_size = 10\n").unwrap();
    assert_eq!(synonymy(dir.path(), &["--config", "vs.toml", "synth"]).status.code(), Some(2));

    std::fs::write(dir.path().join("junk.ubrt"), b"UBRT\x01\x00\x00\x00garbage").unwrap();
    let out = synonymy(dir.path(), &["inspect", "junk.ubrt"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr(&out).lines().count(), 1);
}

#[test]
fn default_run_dir_is_named_by_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), TOY).unwrap();
    ok(dir.path(), &["--config", "exp.toml", "synth"]);
    let runs: Vec<_> = std::fs::read_dir(dir.path().join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    let name = runs[0].file_name().unwrap().to_str().unwrap().to_string();
    assert_eq!(name.len(), 64);
    assert!(name.chars().all(|c| c.is_ascii_hexdigit()));
    assert!(runs[0].join("atoms.tsv").exists());
    assert!(runs[0].join("config.toml").exists());
    assert!(runs[0].join("resolved-synth.toml").exists());
    // same config, same directory
    ok(dir.path(), &["--config", "exp.toml", "synth", "--seed", "9"]);
    assert_eq!(std::fs::read_dir(dir.path().join("runs")).unwrap().count(), 1);
    let resolved = std::fs::read_to_string(runs[0].join("resolved-synth.toml")).unwrap();
    assert!(resolved.contains("seed = 9"));
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = prepared(dir.path(), TOY);
    ok(dir.path(), &["--config", "exp.toml", "--out-dir", "run", "pretrain"]);
    let base = ["--config", "exp.toml", "--out-dir", "run"];
    ok(dir.path(), &[&base[..], &["--threads", "1", "evaluate", "--name", "one"]].concat());
    ok(dir.path(), &[&base[..], &["--threads", "3", "evaluate", "--name", "three"]].concat());
    for file in ["predictions.tsv", "metrics.json", "bins.csv"] {
        assert_eq!(
            std::fs::read(run.join("one").join(file)).unwrap(),
            std::fs::read(run.join("three").join(file)).unwrap(),
            "{file}"
        );
    }
    let text = ok(dir.path(), &[&base[..], &["bins", "--predictions", "run/one/predictions.tsv"]].concat());
    assert!(text.lines().count() >= 11);
    assert!(run.join("one/predictions.bins.csv").exists());

    ok(dir.path(), &[&base[..], &["baseline"]].concat());
    let text = ok(
        dir.path(),
        &[
            &base[..],
            &["mcnemar", "--a", "run/one/predictions.tsv", "--b", "run/baseline-test/predictions.tsv", "--output", "run/cmp"],
        ]
        .concat(),
    );
    assert!(text.contains("statistic"));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("cmp.json")).unwrap()).unwrap();
    assert!(json["statistic"].as_f64().unwrap() >= 0.0);
}

#[test]
fn inspect_lists_header_config_and_checksums() {
    let dir = tempfile::tempdir().unwrap();
    prepared(dir.path(), TOY);
    ok(dir.path(), &["--config", "exp.toml", "--out-dir", "run", "pretrain"]);
    let text = ok(dir.path(), &["inspect", "run/pretrain-A/best.ubrt"]);
    assert!(text.starts_with("magic UBRT\nformat_version 1\n"));
    assert!(text.contains("hidden_size = 16"));
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("embeddings.") || l.starts_with("layers.")).collect();
    assert!(rows.len() > 10);
    for row in rows {
        let sum = row.split_whitespace().last().unwrap();
        assert_eq!(sum.len(), 64, "{row}");
    }
    // identical weights give identical checksums
    assert_eq!(text, ok(dir.path(), &["inspect", "run/pretrain-A/best.ubrt"]));
}
