//! `rlul` — train logit classifiers, serve data-deletion requests by
//! complementary relabeling, and certify removals against retrain oracles.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rlul_cli::commands;
use rlul_cli::config::{RawConfig, WorkbenchConfig};

#[derive(Parser)]
#[command(name = "rlul", version, about = "Relabeling-based machine unlearning workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (flat key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweep parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and seal it into a deletion-session checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Retrain from scratch without the listed points (the naive baseline).
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Newline-delimited indices to remove ('#' comments allowed).
        #[arg(long)]
        requests: PathBuf,
    },
    /// Serve a removal request list against a checkpoint.
    Unlearn {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to resume.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        requests: PathBuf,
    },
    /// Compare an unlearned checkpoint against a retrain oracle.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Checkpoint produced by `unlearn`.
        #[arg(long)]
        unlearned: PathBuf,
        /// Checkpoint produced by `oracle`.
        #[arg(long)]
        oracle: PathBuf,
    },
    /// Run the deletion-size table and the optimizer/rate sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common) -> anyhow::Result<WorkbenchConfig> {
    let raw = RawConfig::load(&common.config)?;
    WorkbenchConfig::resolve(
        &raw,
        common.seed,
        common.out.clone(),
        std::env::var("RLUL_DATA_DIR").ok(),
    )
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train { common } => commands::cmd_train(&resolve(common)?),
        Command::Oracle { common, requests } => commands::cmd_oracle(&resolve(common)?, requests),
        Command::Unlearn {
            common,
            checkpoint,
            requests,
        } => commands::cmd_unlearn(&resolve(common)?, checkpoint, requests),
        Command::Certify {
            common,
            unlearned,
            oracle,
        } => commands::cmd_certify(&resolve(common)?, unlearned, oracle),
        Command::Sweep { common } => commands::cmd_sweep(&resolve(common)?, common.workers),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // One line, machine-parsable.
            let message = format!("{err:#}").replace('\n', " ");
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
