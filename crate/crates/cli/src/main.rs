//! `treesb`: simulate data, fit tree stick-breaking mixtures and summarize
//! the resulting traces.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! error.

mod analyze;
mod fit;
mod moments;
mod simulate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use treesb::Error;

#[derive(Parser)]
#[command(name = "treesb", version, about = "Covariate-dependent tree stick-breaking mixtures")]
struct Cli {
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its reference clustering.
    Simulate(simulate::Args),
    /// Run Gibbs chains and write their traces and a run manifest.
    Fit(fit::Args),
    /// Tabulate prior cross-covariate correlations of the random measures.
    Moments(moments::Args),
    /// Jaccard distances and weight intervals from a trace.
    Diagnose(analyze::DiagnoseArgs),
    /// Per-draw coefficient-step cost from a trace.
    Cost(analyze::CostArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::Parse { .. } | Error::Validation(_) | Error::Io(_) | Error::NotFound(_) | Error::Json(_) => 3,
        Error::Numerical(_) | Error::Domain(_) => 4,
    }
}

pub(crate) fn require_dir(dir: &Path) -> treesb::Result<()> {
    if !dir.is_dir() {
        return Err(Error::NotFound(format!("output directory {}", dir.display())));
    }
    Ok(())
}

pub(crate) fn require_file(path: &Path) -> treesb::Result<()> {
    if !path.is_file() {
        return Err(Error::NotFound(path.display().to_string()));
    }
    Ok(())
}

pub(crate) fn parse_list(s: &str) -> treesb::Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("{t:?} is not a number")))
        })
        .collect()
}

pub(crate) fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info })
        .format_timestamp(None)
        .parse_env("TREESB_LOG")
        .init();
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Moments(a) => moments::run(a),
        Command::Diagnose(a) => analyze::diagnose(a),
        Command::Cost(a) => analyze::cost(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
