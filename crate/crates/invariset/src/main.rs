use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use invariset::commands::{self, CommandError};

/// Maximal constraint-admissible invariant sets of discrete-time linear systems.
#[derive(Parser)]
#[command(name = "invariset", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the invariant set of a JSON problem file.
    Compute {
        problem: PathBuf,
        /// Description output path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print `inside` or `outside` for a point, e.g. `0.3,-0.2`.
    Check {
        description: PathBuf,
        #[arg(allow_hyphen_values = true)]
        point: String,
    },
    /// Membership on a regular grid as CSV.
    Scan {
        description: PathBuf,
        /// `lo1,hi1,lo2,hi2,…`
        #[arg(long = "box", allow_hyphen_values = true)]
        bounds: String,
        /// Points per axis.
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random switched-system benchmark as a Markdown report.
    Bench {
        /// State dimension.
        n: usize,
        /// Number of instances.
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, to_stdout: bool) {
    if to_stdout {
        let _ = std::io::stdout().write_all(text.as_bytes());
    }
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Compute { problem, out, k_max, seed } => {
            let (file, warning, json) = commands::compute_file(&problem, out.as_deref(), k_max, seed)?;
            if let Some(w) = warning {
                eprintln!("warning: {w}");
            }
            emit(&json, out.is_none());
            eprintln!("k* = {}, {} forms", file.k_star, file.forms.len());
        }
        Command::Check { description, point } => {
            let p = commands::parse_point(&point)?;
            println!("{}", commands::check_file(&description, &p)?);
        }
        Command::Scan { description, bounds, resolution, out } => {
            let (lo, hi) = commands::parse_box(&bounds)?;
            let csv = commands::scan_file(&description, &lo, &hi, resolution, out.as_deref())?;
            emit(&csv, out.is_none());
        }
        Command::Bench { n, count, seed, k_max, out } => {
            let report = commands::bench_file(n, count, seed, k_max, out.as_deref())?;
            emit(&report, out.is_none());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
