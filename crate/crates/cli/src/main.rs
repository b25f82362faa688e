//! `abseg`: train, fine-tune, apply and evaluate abstract segmentation models.

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "abseg", version, about = "Discourse segmentation of scientific abstracts")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Label schema of the corpora: three or five.
    #[arg(long, global = true)]
    pub schema: Option<String>,
    /// Random seed; falls back to the config file, then ABSEG_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, or output file for predict/augment/remap/filter-code.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Adam learning rate.
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// Word vectors, one `token v1 ... vD` line per word.
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// TOML file with seed, schema, [model], [train] and [pretrain] settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TransferArgs {
    /// Large labeled corpus to pretrain on.
    #[arg(long)]
    pub source: PathBuf,
    /// Schema of the source file; five-class sources are remapped to three.
    #[arg(long)]
    pub source_schema: Option<String>,
    /// Small labeled target training corpus.
    #[arg(long)]
    pub train: PathBuf,
    /// Target validation corpus for early stopping.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from scratch.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        /// Further corpora whose tokens join the vocabulary (e.g. a later
        /// fine-tuning target).
        #[arg(long = "vocab-from")]
        vocab_from: Vec<PathBuf>,
    },
    /// Continue training a checkpoint on a target corpus.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Label abstracts. Input is a corpus file or raw abstracts separated by
    /// blank lines.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Score a checkpoint on a labeled corpus.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Locally trained vs pre-trained vs fine-tuned on one test set.
    CompareRegimes {
        #[command(flatten)]
        data: TransferArgs,
    },
    /// Fine-tuned accuracy as a function of target training size.
    LearningCurve {
        #[command(flatten)]
        data: TransferArgs,
        /// Comma-separated, strictly increasing fractions in (0, 1].
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1.0")]
        fractions: Vec<f64>,
    },
    /// Full model against four single-component ablations.
    Ablate {
        #[command(flatten)]
        data: TransferArgs,
    },
    /// Corpus summary and label position distribution.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = abseg::corpus::DEFAULT_NORMALIZED_LENGTH)]
        bins: usize,
    },
    /// Cohen's kappa between two annotations of the same abstracts.
    Kappa {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Add self-labeled abstracts to a training corpus.
    Augment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        unlabeled: PathBuf,
    },
    /// Map a five-class corpus onto the three-class schema.
    Remap {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Drop sentences that only point to code or data.
    FilterCode {
        #[arg(long = "in")]
        input: PathBuf,
        /// Regular expressions replacing the built-in patterns.
        #[arg(long = "pattern")]
        patterns: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
