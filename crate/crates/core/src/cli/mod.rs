//! Command-line front end: dataset generation, fitting, reconstruction,
//! diagnostics and experiment sweeps driven by a TOML file.
//!
//! Every command prints a JSON summary on success. Failures print
//! `{"error": {"kind", "message", "exit_code"}}` on stderr and exit with 2
//! (configuration), 3 (numerical) or 4 (I/O).

mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

pub use config::{DatasetConfig, ExperimentConfig, Method};

/// Width of the worker pool; unset means one worker per core.
pub const THREADS_ENV: &str = "PROJREG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "projreg", version, about = "Data-driven regularisation from training pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate training inputs and their images under the operator.
    Gen,
    /// Fit projection, dual and input-side models and save them.
    Fit,
    /// Reconstruct with regularisation by projection.
    Reconstruct,
    /// Reconstruct with dual least squares.
    Dual,
    /// Tikhonov or TV reconstruction with the learned operator.
    Var,
    /// Run the assumption checks and write reports.
    Diagnose,
    /// Sweep noise levels and training sizes and write error curves.
    Experiment,
}

/// Flags override the corresponding config keys.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Experiment file (TOML); built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed of the training images and of the noise.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Number of training pairs used by a reconstruction.
    #[arg(long, global = true, value_name = "N")]
    pub n: Option<usize>,
    /// Single noise level replacing the configured list.
    #[arg(long, global = true, value_name = "X")]
    pub delta: Option<f64>,
    /// Regularisation parameter for `var`.
    #[arg(long, global = true, value_name = "X")]
    pub alpha: Option<f64>,
    /// projection, dual, tikhonov or tv.
    #[arg(long, global = true, value_name = "NAME")]
    pub method: Option<String>,
    /// Treat solver non-convergence as an error.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Measured data (CSV) to reconstruct instead of a synthetic sample.
    #[arg(long, global = true, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        log::debug!("worker pool already initialised; keeping it");
    }
    Ok(())
}

/// Runs one parsed command and returns its JSON summary.
pub fn run(cli: &Cli) -> Result<serde_json::Value> {
    configure_threads()?;
    let ctx = commands::Context::new(&cli.flags)?;
    match cli.command {
        Command::Gen => commands::gen(&ctx),
        Command::Fit => commands::fit(&ctx),
        Command::Reconstruct => commands::reconstruct(&ctx),
        Command::Dual => commands::dual(&ctx),
        Command::Var => commands::var(&ctx),
        Command::Diagnose => commands::diagnose(&ctx),
        Command::Experiment => commands::experiment(&ctx),
    }
}

pub fn error_json(kind: &str, message: &str, code: i32) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message, "exit_code": code } }).to_string()
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            eprintln!("{}", error_json("usage", e.to_string().trim(), 2));
            return 2;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            use std::io::Write;
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            0
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", error_json(e.kind(), &e.to_string(), code));
            code
        }
    }
}
