mod commands;
mod locate;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rfkde::Error;

/// Kernel density estimation on lattice random fields: simulation, estimation,
/// Gaussian-limit checks and mixing diagnostics.
#[derive(Parser, Debug)]
#[command(name = "rfkde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw one field realization and write it as CSV.
    Simulate(CommonArgs),
    /// Evaluate the density estimate of one realization on a grid.
    Estimate(CommonArgs),
    /// Replicate the scaled estimator and test it against its Gaussian limit.
    Clt(CommonArgs),
    /// Mixing series condition, block scale m_n and its limits.
    Mixing(CommonArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the base seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Caps the number of worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Validate the config and print the planned work without running it.
    #[arg(long)]
    pub dry_run: bool,
}

/// Command failure with its exit status.
#[derive(Debug)]
pub enum Failure {
    /// Exit 1: the run completed but a check failed.
    Check(String),
    /// Exit 2: the configuration is invalid.
    Config { message: String, path: Option<String>, line: Option<usize> },
    /// Exit 3: anything else.
    Runtime(String),
}

impl Failure {
    pub fn from_error(err: Error, text: Option<&str>) -> Failure {
        match err {
            Error::Config { ref path, .. } => {
                let line = text.and_then(|t| locate::line_of_path(t, path));
                Failure::Config {
                    message: err.to_string(),
                    path: Some(path.clone()),
                    line,
                }
            }
            Error::Json(ref e) if e.is_data() || e.is_syntax() || e.is_eof() => Failure::Config {
                message: err.to_string(),
                path: None,
                line: Some(e.line()),
            },
            Error::Dimension { .. } => Failure::Config {
                message: err.to_string(),
                path: None,
                line: None,
            },
            other => Failure::Runtime(other.to_string()),
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Config { .. } => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn record(&self) -> serde_json::Value {
        match self {
            Failure::Check(m) => serde_json::json!({"error": {"kind": "check", "message": m}}),
            Failure::Config { message, path, line } => {
                serde_json::json!({"error": {"kind": "config", "message": message, "path": path, "line": line}})
            }
            Failure::Runtime(m) => serde_json::json!({"error": {"kind": "runtime", "message": m}}),
        }
    }

    fn human(&self) -> String {
        match self {
            Failure::Check(m) => format!("check failed: {m}"),
            Failure::Config { message, line: Some(l), .. } => format!("config error at line {l}: {message}"),
            Failure::Config { message, .. } => format!("config error: {message}"),
            Failure::Runtime(m) => format!("error: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Clt(a) => commands::clt(a),
        Command::Mixing(a) => commands::mixing(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.human());
            eprintln!("{}", f.record());
            ExitCode::from(f.code())
        }
    }
}
