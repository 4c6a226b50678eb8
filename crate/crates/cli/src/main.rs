//! `subridge`: sweeps, path profiles and invariant checks for subsampled
//! ridge ensembles, written as CSV.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod check;
mod config;
mod data;
mod error;
mod output;
mod path;
mod seeds;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "subridge", version, about = "Subsampled ridge ensemble experiments")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; output does not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ensemble risks over a (lambda, psi) grid.
    Sweep,
    /// Functionals along equivalence paths.
    Path,
    /// Invariant suite; exits with status 3 if any invariant fails.
    Check {
        #[arg(long, value_enum)]
        inject_fault: Option<check::Fault>,
    },
}

const DEFAULT_SEED: u64 = 20240101;

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let cfg = cli.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let seed = cli.seed.or(cfg.as_ref().and_then(|c| c.seed)).unwrap_or(DEFAULT_SEED);
    let out = cli
        .out
        .or_else(|| cfg.as_ref().and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from("results"));

    let written = match cli.command {
        Command::Sweep => {
            let cfg = cfg.ok_or_else(|| CliError::Usage("sweep needs --config".into()))?;
            vec![sweep::run(&cfg, seed, &out)?]
        }
        Command::Path => {
            let cfg = cfg.ok_or_else(|| CliError::Usage("path needs --config".into()))?;
            path::run(&cfg, seed, &out)?
        }
        Command::Check { inject_fault } => {
            let cc = cfg.and_then(|c| c.check).unwrap_or_default();
            check::run(&cc, seed, inject_fault, &out)?
        }
    };
    for path in written {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
