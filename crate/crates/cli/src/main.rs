use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fac_core::commands;
use fac_core::feasibility::GridSpec;
use fac_core::{FacError, RunConfig};

#[derive(Parser)]
#[command(name = "fac", version, about = "Feasible actor-critic: training, evaluation and feasibility analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a learner from a run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run deterministic evaluation episodes from a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify grid states by multiplier value.
    Feasmap {
        #[arg(long)]
        checkpoint: PathBuf,
        /// MIN:MAX:STEP per state axis, comma separated.
        #[arg(long)]
        grid: Option<GridSpec>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact analysis of a finite CMDP.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            print!("{}", commands::cmd_train(cfg, seed, out.as_deref())?);
        }
        Command::Eval { checkpoint, episodes, out } => {
            print!("{}", commands::cmd_eval(&checkpoint, episodes, out.as_deref())?);
        }
        Command::Feasmap { checkpoint, grid, out } => {
            print!("{}", commands::cmd_feasmap(&checkpoint, grid.as_ref(), out.as_deref())?);
        }
        Command::Oracle { config } => {
            print!("{}", commands::cmd_oracle(&config)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<FacError>() {
                Some(FacError::Config { .. } | FacError::Parse { .. }) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
