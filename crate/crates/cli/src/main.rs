//! `pulseforge`: file-level frontend for the rPPG toolkit. Six subcommands
//! cover the whole workflow — `synth` writes labeled datasets, `pretrain`
//! and `finetune` train the two model families, `predict` estimates heart
//! rates, `evaluate` scores them, `ensemble` averages prediction runs.
//!
//! Conventions shared by every command:
//! * settings resolve as flag > `PULSEFORGE_SEED` (seeds only) > `--config`
//!   JSON > built-in default, and the resolved set is echoed to stdout and
//!   `run_config.json` beside the outputs;
//! * exit codes: 0 success, 2 usage or file trouble, 3 violated numeric
//!   contract;
//! * identical flags and seed produce byte-identical artifacts.

mod args;
mod commands;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use pulseforge_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or config-file contents.
    #[error("{0}")]
    Usage(String),
    /// Anything surfaced by the core library.
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_io_or_format() => 2,
            CliError::Core(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "pulseforge", version, about = "Remote-photoplethysmography heart-rate toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled rPPG dataset
    Synth(args::SynthArgs),
    /// Pretrain: self-supervised on MSTmaps (solution 1) or contrastive on video (solution 2)
    Pretrain(args::PretrainArgs),
    /// Fine-tune a pretrained checkpoint on labeled samples
    Finetune(args::FinetuneArgs),
    /// Estimate per-window and per-sample heart rates
    Predict(args::PredictArgs),
    /// Score a prediction summary against manifest ground truth
    Evaluate(args::EvaluateArgs),
    /// Average two or more prediction summaries sample by sample
    Ensemble(args::EnsembleArgs),
}

fn main() {
    // Usage errors from clap itself already exit with code 2.
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let (_, sub) = matches
        .subcommand()
        .expect("subcommand is required by the parser");

    let result = match cli.command {
        Command::Synth(a) => a.resolve(sub).and_then(|s| commands::cmd_synth(&s)),
        Command::Pretrain(a) => a.resolve(sub).and_then(|s| commands::cmd_pretrain(&s)),
        Command::Finetune(a) => a.resolve(sub).and_then(|s| commands::cmd_finetune(&s)),
        Command::Predict(a) => a.resolve(sub).and_then(|s| commands::cmd_predict(&s)),
        Command::Evaluate(a) => commands::cmd_evaluate(&a.into_settings()),
        Command::Ensemble(a) => commands::cmd_ensemble(&a.into_settings()),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
