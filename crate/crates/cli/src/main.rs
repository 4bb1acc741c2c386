//! `amlas`: runs the assurance pipeline stage by stage into a run directory
//! whose ledger records every artefact produced.
//!
//! Exit status: 0 on success, 1 when a requirement verdict or bounded
//! property fails, 2 on usage, dependency, configuration or integrity errors.

mod config;
mod pipeline;

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use amlas_core::abstraction::AbstractionError;
use amlas_core::assurance::AssuranceError;
use amlas_core::pctl::PctlError;
use amlas_core::plans::PlanError;
use clap::{Parser, Subcommand};
use thiserror::Error;

use pipeline::{Outcome, Run};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Assurance(#[from] AssuranceError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Pctl(#[from] PctlError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "amlas", version, about = "Assured RL navigation pipeline")]
struct Cli {
    /// TOML configuration; defaults to the run directory's config.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for every trial plan.
    #[arg(long, global = true, env = "AMLAS_SEED")]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stage 1: commit the scoping artefacts A to E.
    Scope,
    /// Stage 2: commit the RL safety requirements (H).
    Requirements,
    /// Stage 3: commit data requirements, balance audit and plans (L to P).
    Plan,
    /// Stage 4: train the agent (U, V).
    Train,
    /// Stage 4: run the internal test plan (X).
    Test,
    /// Stage 5: run general and targeted verification trials (Z).
    Verify,
    /// Stage 5: collect traces for model learning (AA).
    Traces,
    /// Stage 5: estimate the DTMC from committed traces (AA).
    Abstract,
    /// Stage 5: check properties against the committed DTMC (Z).
    Check {
        /// Property file; defaults to the built-in safety properties.
        #[arg(long)]
        props: Option<PathBuf>,
        /// DTMC file to check instead of the committed one; nothing is
        /// recorded in the ledger.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write reports/stage4.md and reports/stage5.md from the ledger.
    Report,
    /// Stage 6: operational scenarios, erroneous-behaviour log and
    /// integration results (EE, DD, FF).
    Integrate,
    /// Every stage in order, then ledger verification.
    RunAll,
    /// Ledger maintenance.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
}

#[derive(Debug, Subcommand)]
enum LedgerCommand {
    /// Re-hash payloads and check links and stage dependencies.
    Verify,
}

fn execute(cli: Cli) -> Result<Outcome, CliError> {
    if let Command::Check {
        props,
        model: Some(model),
    } = &cli.command
    {
        return pipeline::check_model_file(model, props.as_deref());
    }
    let mut run = Run::open(&cli.out, cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Scope => run.scope(),
        Command::Requirements => run.requirements(),
        Command::Plan => run.plan(),
        Command::Train => run.train(),
        Command::Test => run.test(),
        Command::Verify => run.verify(),
        Command::Traces => run.traces(),
        Command::Abstract => run.abstract_traces(),
        Command::Check { props, .. } => run.check(props.as_deref()),
        Command::Report => run.report(),
        Command::Integrate => run.integrate(),
        Command::RunAll => run.run_all(),
        Command::Ledger {
            command: LedgerCommand::Verify,
        } => run.verify_ledger(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
