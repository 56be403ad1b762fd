//! `volcast` command-line front end.
//!
//! Exit codes: 0 success, 2 user or configuration error, 3 estimation
//! failure, 4 runtime failure.

mod commands;
mod config;
mod journal;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const USAGE: u8 = 2;
    pub const ESTIMATION: u8 = 3;
    pub const RUNTIME: u8 = 4;

    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: Self::USAGE,
            message: msg.into(),
        }
    }

    pub fn estimation(msg: impl Into<String>) -> Self {
        Self {
            code: Self::ESTIMATION,
            message: msg.into(),
        }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Self {
            code: Self::RUNTIME,
            message: msg.into(),
        }
    }
}

impl From<volcast::Error> for CliError {
    fn from(e: volcast::Error) -> Self {
        use volcast::Error as E;
        let code = match &e {
            E::Estimation(_) => Self::ESTIMATION,
            E::State(_) | E::Io(_) | E::Csv(_) => Self::RUNTIME,
            _ => Self::USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "volcast",
    version,
    about = "Volatility density forecasting and wCRPS backtests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command.
#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config and VOLCAST_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize price or return files into return CSVs plus a manifest.
    Ingest(commands::IngestArgs),
    /// Fit one model on one window.
    Fit(commands::FitArgs),
    /// Run the rolling-window backtest described by a config file.
    Backtest(commands::BacktestArgs),
    /// Ratio and Diebold-Mariano tables from an existing score CSV.
    Compare(commands::CompareArgs),
    /// Cumulative wCRPS differences for leverage/no-leverage pairs.
    Report(commands::ReportArgs),
    /// Simulate a return series from a model with given parameters.
    Simulate(commands::SimulateArgs),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Ingest(a) => &a.common,
            Command::Fit(a) => &a.common,
            Command::Backtest(a) => &a.common,
            Command::Compare(a) => &a.common,
            Command::Report(a) => &a.common,
            Command::Simulate(a) => &a.common,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.command.common().quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Fit(a) => commands::fit(a),
        Command::Backtest(a) => commands::backtest(a),
        Command::Compare(a) => commands::compare(a),
        Command::Report(a) => commands::report(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
