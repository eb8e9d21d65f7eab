//! Command-line front end: config parsing, the output manifest and the subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use clap::{Parser, Subcommand};
use commands::TheoremId;
use error::{CliError, CliResult};
use manifest::Output;
use std::path::PathBuf;

pub const DEFAULT_OUT: &str = "hardylab-out";

#[derive(Debug, Parser)]
#[command(name = "hardylab", version, about = "Heat semigroup decay rates for radial Schrodinger operators")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exponent table, criticality and case tags.
    Classify,
    /// Solve h_k and run the profile inequality suites.
    Harmonic,
    /// Evolve one mode and run the interior suites.
    Evolve,
    /// Empirical norms against the envelopes, one CSV per (k, alpha, tuple).
    NormScan,
    /// Check one rate statement.
    Verify {
        #[arg(value_enum)]
        theorem: TheoremId,
    },
    /// Summary of verdicts and constants in the output directory.
    Report,
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Classify => "classify".into(),
            Command::Harmonic => "harmonic".into(),
            Command::Evolve => "evolve".into(),
            Command::NormScan => "norm-scan".into(),
            Command::Verify { theorem } => format!("verify {}", theorem.label()),
            Command::Report => "report".into(),
        }
    }
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> CliResult<i32> {
    let path = cli.config.ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let loaded = config::load(&path)?;
    if let Some(n) = cli.jobs {
        // A pool may already exist when called twice in one process; the old one is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let seed = cli.seed.unwrap_or(loaded.cfg.seed);
    let root = cli.out.or_else(|| loaded.cfg.output.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut out = Output::open(&root, &loaded, &cli.command.name(), seed)?;
    let mut code = 0;
    match cli.command {
        Command::Classify => commands::classify(&loaded, &mut out)?,
        Command::Harmonic => commands::harmonic(&loaded, &mut out)?,
        Command::Evolve => commands::evolve(&loaded, &mut out)?,
        Command::NormScan => commands::norm_scan(&loaded, &mut out)?,
        Command::Verify { theorem } => {
            if commands::verify(&loaded, &mut out, theorem)? {
                code = CliError::VerifyFailed(String::new()).exit_code();
            }
        }
        Command::Report => commands::report(&loaded, &mut out)?,
    }
    out.finish()?;
    Ok(code)
}
