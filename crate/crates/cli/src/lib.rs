//! End-to-end pipeline behind the `spectran` binary: synthetic data,
//! preprocessing, training, evaluation and spectral diagnostics.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use spectran_core::numkit::exec;
use spectran_core::Error;

pub use commands::{cmd_diagnose, cmd_evaluate, cmd_preprocess, cmd_synth, cmd_train, DiagnoseOptions};
pub use config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "spectran", version, about = "Spectral-aware semantic embedding adapters for sequential recommendation")]
pub struct Cli {
    /// Run configuration (TOML with [run], [model], [train] and [synth] tables).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Forces single-threaded, bitwise-reproducible execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Overrides run.out, the directory receiving every output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic embedding matrix and interaction log.
    Synth,
    /// Filter and split an interaction log.
    Preprocess,
    /// Train the configured model and write its best checkpoint.
    Train,
    /// Test-partition metrics of a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Covariance spectra of raw and projected embeddings, and spectral weights.
    Diagnose {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Require the principal/subordinate weight report.
        #[arg(long)]
        weights: bool,
        /// Number of spectrum rows to write (all components by default).
        #[arg(long)]
        top_k: Option<usize>,
    },
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Unsupported(_) | Error::Contract(_) => EXIT_CONFIG,
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

fn resolve(cli: &Cli) -> spectran_core::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if cli.deterministic {
        cfg.run.deterministic = true;
    }
    if let Some(o) = &cli.out {
        cfg.run.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> spectran_core::Result<()> {
    let cfg = resolve(cli)?;
    exec::set_parallel(!cfg.run.deterministic);
    match &cli.command {
        Command::Synth => cmd_synth(&cfg),
        Command::Preprocess => cmd_preprocess(&cfg).map(drop),
        Command::Train => cmd_train(&cfg).map(drop),
        Command::Evaluate { checkpoint } => cmd_evaluate(&cfg, checkpoint.as_deref()).map(drop),
        Command::Diagnose {
            embeddings,
            checkpoint,
            weights,
            top_k,
        } => {
            let opts = DiagnoseOptions {
                embeddings: embeddings.clone(),
                checkpoint: checkpoint.clone(),
                require_weights: *weights,
                top_k: *top_k,
            };
            cmd_diagnose(&cfg, &opts).map(drop)
        }
    }
}
