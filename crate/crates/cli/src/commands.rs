use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use synonymy::corpus::{
    generate_pairs, read_atom_table, read_pair_set, split_pairs, split_pairs_by_atom, synth_literature,
    synth_vocabulary, write_atom_table, write_pair_set, AtomTable, PairSet,
};
use synonymy::evaluation::{
    bin_by_jaccard, classify_pairs, compute_metrics, jaccard_baseline, mcnemar, read_predictions,
    sweep_jaccard_threshold, write_predictions, ClassifyOptions, PredictionSet,
};
use synonymy::model::{ModelCheckpoint, FORMAT_VERSION, MAGIC};
use synonymy::tokenizer::{count_words_parallel, train_wordpiece_from_counts, WordPieceTrainer, WordPieceVocab};
use synonymy::training::{run_schedule, MlmCorpus, MlmData, TrainingData, TrainingError, Variant};

use crate::config::{section, EvalSection, ExperimentConfig, ScheduleSection, TokenizerCorpus};
use crate::{Cli, Command, SplitName, Usage};

pub const ATOMS_FILE: &str = "atoms.tsv";
pub const LITERATURE_FILE: &str = "literature.txt";
pub const PAIRS_FILE: &str = "pairs.tsv";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const CONFIG_FILE: &str = "config.toml";

struct Ctx {
    config: ExperimentConfig,
    run_dir: PathBuf,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let path = cli
            .global
            .config
            .as_ref()
            .ok_or_else(|| Usage::new("--config is required for this command"))?;
        let config = ExperimentConfig::load(path)?;
        let run_dir = match &cli.global.out_dir {
            Some(d) => d.clone(),
            None => Path::new("runs").join(config.hash()),
        };
        fs::create_dir_all(&run_dir).with_context(|| run_dir.display().to_string())?;
        write(&run_dir.join(CONFIG_FILE), &config.to_toml())?;
        Ok(Self { config, run_dir })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    /// Records the config with this command's overrides applied.
    fn resolved<T: Serialize>(&self, command: &str, value: &T) -> Result<()> {
        let text = toml::to_string_pretty(value).context("serializing resolved config")?;
        write(&self.path(&format!("resolved-{command}.toml")), &text)
    }

    fn atoms(&self) -> Result<AtomTable> {
        let path = self
            .config
            .corpus
            .as_ref()
            .and_then(|c| c.atoms.clone())
            .unwrap_or_else(|| self.path(ATOMS_FILE));
        require(&path)?;
        Ok(read_atom_table(&path)?)
    }

    fn split(&self, split: SplitName) -> Result<PairSet> {
        let path = self.path(split.file());
        require(&path)?;
        Ok(read_pair_set(&path)?)
    }

    fn vocab(&self) -> Result<WordPieceVocab> {
        let path = self.path(VOCAB_FILE);
        require(&path)?;
        Ok(WordPieceVocab::load(&path)?)
    }

    fn eval(&self) -> EvalSection {
        self.config.eval.clone().unwrap_or_default()
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Usage::new(format!("missing input {}", path.display())).into())
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| parent.display().to_string())?;
    }
    fs::write(path, text).with_context(|| path.display().to_string())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    require(path)?;
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { seed } => synth(&Ctx::new(cli)?, *seed),
        Command::Pairs { seed } => pairs(&Ctx::new(cli)?, *seed),
        Command::Split { seed } => split(&Ctx::new(cli)?, *seed),
        Command::TrainTokenizer => train_tokenizer(&Ctx::new(cli)?),
        Command::Pretrain {
            variant,
            init_checkpoint,
            seed,
        } => pretrain(&Ctx::new(cli)?, *variant, init_checkpoint.clone(), *seed),
        Command::Evaluate {
            checkpoint,
            variant,
            split,
            name,
        } => evaluate(&Ctx::new(cli)?, checkpoint.clone(), *variant, *split, name.clone()),
        Command::Bins { predictions, threshold } => bins(&Ctx::new(cli)?, predictions, *threshold),
        Command::Mcnemar {
            a,
            b,
            threshold,
            no_correction,
            output,
        } => compare(cli, a, b, *threshold, *no_correction, output.as_deref()),
        Command::Baseline { split } => baseline(&Ctx::new(cli)?, *split),
        Command::Inspect { checkpoint } => inspect(checkpoint),
    }
}

fn synth(ctx: &Ctx, seed: Option<u64>) -> Result<()> {
    let corpus = section(&ctx.config.corpus, "corpus")?;
    let mut cfg = section(&corpus.synth, "corpus.synth")?.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    ctx.resolved("synth", &cfg)?;
    let table = synth_vocabulary(&cfg)?;
    write_atom_table(&table, &ctx.path(ATOMS_FILE))?;
    if corpus.literature_lines > 0 {
        let mut text = synth_literature(&table, corpus.literature_lines, cfg.seed).join("\n");
        text.push('\n');
        write(&ctx.path(LITERATURE_FILE), &text)?;
    }
    println!("{} atoms in {} concepts", table.len(), table.concepts().len());
    Ok(())
}

fn pairs(ctx: &Ctx, seed: Option<u64>) -> Result<()> {
    let mut section = section(&ctx.config.pairs, "pairs")?.clone();
    if let Some(s) = seed {
        section.seed = s;
    }
    ctx.resolved("pairs", &section)?;
    let table = ctx.atoms()?;
    let set = generate_pairs(&table, &section.pair_config())?;
    write_pair_set(&set, &ctx.path(PAIRS_FILE))?;
    println!("{} pairs ({} synonymous)", set.len(), set.positives());
    Ok(())
}

fn split(ctx: &Ctx, seed: Option<u64>) -> Result<()> {
    let mut section = section(&ctx.config.pairs, "pairs")?.clone();
    if let Some(s) = seed {
        section.seed = s;
    }
    ctx.resolved("split", &section)?;
    let fractions = section.split_fractions().map_err(|e| Usage::new(e.to_string()))?;
    let path = ctx.path(PAIRS_FILE);
    require(&path)?;
    let all = read_pair_set(&path)?;
    let (parts, dropped) = if section.by_atom {
        split_pairs_by_atom(&all, fractions, section.seed)
    } else {
        (split_pairs(&all, fractions, section.seed), 0)
    };
    let (train, dev, test) = parts;
    for (name, set) in [(SplitName::Train, &train), (SplitName::Dev, &dev), (SplitName::Test, &test)] {
        write_pair_set(set, &ctx.path(name.file()))?;
    }
    println!("train {} dev {} test {} dropped {dropped}", train.len(), dev.len(), test.len());
    Ok(())
}

fn train_tokenizer(ctx: &Ctx) -> Result<()> {
    let section = section(&ctx.config.tokenizer, "tokenizer")?;
    ctx.resolved("train-tokenizer", section)?;
    let mut lines: Vec<String> = ctx.atoms()?.atoms().iter().map(|a| a.text.clone()).collect();
    if section.corpus == TokenizerCorpus::AtomsAndLiterature {
        let path = ctx
            .config
            .corpus
            .as_ref()
            .and_then(|c| c.literature.clone())
            .unwrap_or_else(|| ctx.path(LITERATURE_FILE));
        lines.extend(read_lines(&path)?);
    }
    let counts = count_words_parallel(&lines);
    let vocab = train_wordpiece_from_counts(
        &counts,
        WordPieceTrainer::new(section.vocab_size, section.min_pair_frequency),
    )?;
    vocab.save(&ctx.path(VOCAB_FILE))?;
    println!("{} tokens", vocab.len());
    Ok(())
}

fn mlm_data(ctx: &Ctx, variant: Variant) -> Result<MlmData> {
    let corpus = ctx.config.corpus.clone().unwrap_or_default();
    let missing = || anyhow::Error::from(Usage::new(TrainingError::MissingCorpus(variant).to_string()));
    let mut data = MlmData::default();
    let needs = variant.mlm_corpus();
    if needs == MlmCorpus::None {
        return Ok(data);
    }
    let atoms = corpus.mlm_atoms.ok_or_else(missing)?;
    require(&atoms)?;
    data.atom_lines = Some(read_atom_table(&atoms)?.atoms().iter().map(|a| a.text.clone()).collect());
    if needs == MlmCorpus::AtomsAndLiterature {
        let lit = corpus.mlm_literature.ok_or_else(missing)?;
        data.literature_lines = Some(read_lines(&lit)?);
    }
    Ok(data)
}

fn schedule_section(ctx: &Ctx) -> ScheduleSection {
    ctx.config.schedule.clone().unwrap_or_default()
}

fn pretrain_dir(ctx: &Ctx, variant: Variant) -> PathBuf {
    ctx.path(&format!("pretrain-{variant}"))
}

fn pretrain(ctx: &Ctx, variant: Variant, init: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut model = section(&ctx.config.model, "model")?.clone();
    if variant == Variant::Init && init.is_none() {
        return Err(Usage::new("--init-checkpoint is required for variant init").into());
    }
    if variant != Variant::Init && init.is_some() {
        return Err(Usage::new(format!("--init-checkpoint only applies to variant init, not {variant}")).into());
    }
    if let Some(p) = &init {
        require(p)?;
    }
    let mlm = mlm_data(ctx, variant)?;
    let mut schedule = schedule_section(ctx).resolve(variant, init, ctx.eval().threshold);
    if let Some(s) = seed {
        schedule.seed = s;
    }
    let vocab = ctx.vocab()?;
    model.vocab_size = vocab.len();
    let out = pretrain_dir(ctx, variant);
    #[derive(Serialize)]
    struct Resolved<'a> {
        model: &'a synonymy::model::ModelConfig,
        schedule: &'a synonymy::training::Schedule,
    }
    let resolved = Resolved {
        model: &model,
        schedule: &schedule,
    };
    ctx.resolved(&format!("pretrain-{variant}"), &resolved)?;

    let atoms = ctx.atoms()?;
    let train = ctx.split(SplitName::Train)?;
    let dev = ctx.split(SplitName::Dev)?;
    let data = TrainingData {
        atoms: &atoms,
        vocab: &vocab,
        train: &train,
        dev: &dev,
        mlm: &mlm,
    };
    let result = run_schedule(&schedule, &model, &data, &out, &mut |r| {
        let dev = r.dev.as_ref().map(|m| format!(" dev_f1 {:.4}", m.f1)).unwrap_or_default();
        eprintln!("{:?} epoch {} steps {} loss {:.4}{dev}", r.phase, r.epoch, r.steps, r.mean_loss);
    })?;
    println!(
        "best epoch {} dev F1 {:.4} -> {}",
        result.history.best_epoch.unwrap_or(0),
        result.history.best_dev_f1.unwrap_or(0.0),
        result.best_path.display()
    );
    Ok(())
}

fn write_reports(dir: &Path, preds: &PredictionSet, atoms: &AtomTable, eval: &EvalSection) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    write_predictions(preds, &dir.join("predictions.tsv"))?;
    let metrics = compute_metrics(preds)?;
    write(&dir.join("metrics.json"), &metrics.to_json())?;
    write(&dir.join("metrics.txt"), &metrics.to_text())?;
    print!("{}", metrics.to_text());
    if eval.bins {
        let report = bin_by_jaccard(preds, atoms)?;
        write(&dir.join("bins.json"), &report.to_json())?;
        write(&dir.join("bins.csv"), &report.to_csv())?;
        write(&dir.join("bins.txt"), &report.to_text())?;
    }
    Ok(())
}

fn evaluate(
    ctx: &Ctx,
    checkpoint: Option<PathBuf>,
    variant: Variant,
    split: SplitName,
    name: Option<String>,
) -> Result<()> {
    let eval = ctx.eval();
    let path = checkpoint.unwrap_or_else(|| pretrain_dir(ctx, variant).join(synonymy::training::BEST_CHECKPOINT));
    require(&path)?;
    let ckpt = ModelCheckpoint::load(&path)?;
    let max_len = schedule_section(ctx).resolve(variant, None, eval.threshold).sp_max_len;
    let options = ClassifyOptions {
        threshold: eval.threshold,
        max_len: max_len.min(ckpt.config().max_positions),
        ..ClassifyOptions::default()
    };
    #[derive(Serialize)]
    struct Resolved<'a> {
        checkpoint: String,
        split: &'a str,
        max_len: usize,
        eval: &'a EvalSection,
    }
    let name = name.unwrap_or_else(|| format!("eval-{variant}-{}", split.name()));
    ctx.resolved(
        &name,
        &Resolved {
            checkpoint: path.display().to_string(),
            split: split.name(),
            max_len: options.max_len,
            eval: &eval,
        },
    )?;
    let atoms = ctx.atoms()?;
    let pairs = ctx.split(split)?;
    let vocab = ctx.vocab()?;
    let preds = classify_pairs(&ckpt.params, &atoms, &pairs, &vocab, &options)?;
    write_reports(&ctx.path(&name), &preds, &atoms, &eval)
}

fn bins(ctx: &Ctx, predictions: &Path, threshold: Option<f64>) -> Result<()> {
    require(predictions)?;
    let threshold = threshold.unwrap_or(ctx.eval().threshold);
    let preds = read_predictions(predictions, threshold)?;
    let report = bin_by_jaccard(&preds, &ctx.atoms()?)?;
    let stem = predictions.with_extension("");
    let out = |ext: &str| PathBuf::from(format!("{}.bins.{ext}", stem.display()));
    write(&out("json"), &report.to_json())?;
    write(&out("csv"), &report.to_csv())?;
    write(&out("txt"), &report.to_text())?;
    print!("{}", report.to_text());
    Ok(())
}

fn compare(
    cli: &Cli,
    a: &Path,
    b: &Path,
    threshold: Option<f64>,
    no_correction: bool,
    output: Option<&Path>,
) -> Result<()> {
    let eval = match &cli.global.config {
        Some(p) => ExperimentConfig::load(p)?.eval.unwrap_or_default(),
        None => EvalSection::default(),
    };
    let threshold = threshold.unwrap_or(eval.threshold);
    require(a)?;
    require(b)?;
    let corrected = eval.continuity_correction && !no_correction;
    let result = mcnemar(&read_predictions(a, threshold)?, &read_predictions(b, threshold)?, corrected)?;
    if let Some(prefix) = output {
        write(&PathBuf::from(format!("{}.json", prefix.display())), &result.to_json())?;
        write(&PathBuf::from(format!("{}.txt", prefix.display())), &result.to_text())?;
    }
    print!("{}", result.to_text());
    Ok(())
}

fn baseline(ctx: &Ctx, split: SplitName) -> Result<()> {
    let eval = ctx.eval();
    let atoms = ctx.atoms()?;
    let dev = ctx.split(SplitName::Dev)?;
    let pairs = ctx.split(split)?;
    let sweep = sweep_jaccard_threshold(&atoms, &dev)?;
    let name = format!("baseline-{}", split.name());
    ctx.resolved(&name, &eval)?;
    let dir = ctx.path(&name);
    let mut json = serde_json::to_string_pretty(&sweep)?;
    json.push('\n');
    write(&dir.join("sweep.json"), &json)?;
    println!("dev-tuned Jaccard threshold {:.2}", sweep.threshold);
    let preds = jaccard_baseline(&atoms, &pairs, sweep.threshold)?;
    write_reports(&dir, &preds, &atoms, &eval)
}

fn inspect(path: &Path) -> Result<()> {
    require(path)?;
    let ckpt = ModelCheckpoint::load(path)?;
    let mut out = String::new();
    writeln!(out, "magic {}", String::from_utf8_lossy(MAGIC))?;
    writeln!(out, "format_version {FORMAT_VERSION}")?;
    match &ckpt.optimizer {
        Some(s) => writeln!(out, "optimizer adam step {}", s.step)?,
        None => writeln!(out, "optimizer none")?,
    }
    writeln!(out, "parameters {}", ckpt.params.num_parameters())?;
    writeln!(out, "metadata {}", serde_json::to_string(&ckpt.metadata)?)?;
    writeln!(out, "\n[config]")?;
    out.push_str(&toml::to_string_pretty(ckpt.config())?);
    writeln!(out, "\n[arrays]")?;
    let specs = ckpt.config().array_specs();
    let width = specs.iter().map(|s| s.name.len()).max().unwrap_or(0);
    for (spec, data) in specs.iter().zip(ckpt.params.arrays()) {
        let mut hasher = Sha256::new();
        for x in data {
            hasher.update(x.to_le_bytes());
        }
        let shape = spec.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        writeln!(out, "{:width$}  {:>10}  {}", spec.name, shape, hex::encode(hasher.finalize()))?;
    }
    print!("{out}");
    Ok(())
}
