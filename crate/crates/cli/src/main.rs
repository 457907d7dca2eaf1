mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use synonymy::training::{TrainingError, Variant};

/// Invalid invocation or configuration; exits with status 2.
#[derive(Debug)]
pub struct Usage(String);

impl Usage {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser, Debug)]
#[command(name = "synonymy", version, about = "Synonymy prediction between vocabulary atoms")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Global {
    /// Experiment config (TOML).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory; defaults to runs/<sha256 of the config>.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "SYNONYMY_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub fn file(self) -> &'static str {
        match self {
            SplitName::Train => "train.tsv",
            SplitName::Dev => "dev.tsv",
            SplitName::Test => "test.tsv",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic atom table (and literature lines).
    Synth {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate labeled synonym and non-synonym pairs.
    Pairs {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Split the pairs into train, dev and test.
    Split {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the WordPiece vocabulary.
    TrainTokenizer,
    /// Run a training schedule.
    Pretrain {
        #[arg(long, default_value = "A")]
        variant: Variant,
        #[arg(long)]
        init_checkpoint: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Classify a split with a checkpoint and report metrics.
    Evaluate {
        /// Defaults to the best checkpoint of `pretrain --variant`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "A")]
        variant: Variant,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
        /// Name of the output directory under the run directory.
        #[arg(long)]
        name: Option<String>,
    },
    /// Break a predictions file down by Jaccard score.
    Bins {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Compare two predictions files with McNemar's test.
    Mcnemar {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        no_correction: bool,
        /// Also write <PREFIX>.json and <PREFIX>.txt.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Jaccard-threshold baseline tuned on dev.
    Baseline {
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Print a checkpoint's header, config and array checksums.
    Inspect { checkpoint: PathBuf },
}

fn exit_status(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    let training = err
        .downcast_ref::<TrainingError>()
        .or_else(|| match err.downcast_ref::<synonymy::Error>() {
            Some(synonymy::Error::Training(t)) => Some(t),
            _ => None,
        });
    match training {
        Some(TrainingError::MissingCorpus(_) | TrainingError::MissingInitCheckpoint | TrainingError::InvalidSchedule(_)) => 2,
        _ => 1,
    }
}

/// The error chain on one line. Library errors already embed their source
/// in the message, so a cause repeating the tail is dropped.
fn one_line(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if msg.ends_with(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg.replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(exit_status(&e))
        }
    }
}
