mod commands;
mod failure;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::failure::Failure;

/// Convolutional answer selection: prepare corpora, train, evaluate and
/// rank candidate answers.
#[derive(Debug, Parser)]
#[command(name = "qarank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a released or canonical corpus into canonical files.
    Prepare {
        /// Directory holding the raw corpus.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print corpus counts.
    Stats {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write its checkpoint and epoch history.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split name; defaults to eval.split or dev.
        #[arg(long)]
        split: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the top-ranked answer of every question.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split name; defaults to eval.split or dev.
        #[arg(long, conflicts_with = "questions")]
        split: Option<String>,
        /// Question file in the canonical pooled format.
        #[arg(long)]
        questions: Option<PathBuf>,
        /// Also print the answer text.
        #[arg(long)]
        text: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train several seeds, pick the best on dev and report its test accuracy.
    Protocol {
        /// Number of runs; defaults to protocol.runs or 1.
        #[arg(long)]
        runs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Config file of `key = value` lines with `[section]` headers.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Canonical corpus directory; same as data.corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory for reports and checkpoints.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) if e.kind() == clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            let failure = Failure::Usage("missing command, see qarank --help".into());
            eprintln!("{failure}");
            return failure.exit_code();
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let detail: Vec<&str> = rendered
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            let failure =
                Failure::Usage(detail.join(" ").trim_start_matches("error: ").to_string());
            eprintln!("{failure}");
            return failure.exit_code();
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{failure}");
            failure.exit_code()
        }
    }
}
