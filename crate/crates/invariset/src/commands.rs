//! The `compute`, `check`, `scan` and `bench` subcommands as library calls.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use invariset_core::oracle::{random_instance_example3, GridScan};
use invariset_core::{run_problem_with, run_switched, Error, IterateOptions};
use rayon::prelude::*;

use crate::format::{DescriptionFile, FormatError, ProblemFile};
use crate::parallel::RayonSolver;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

/// A failure with the process exit code it maps to.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl CommandError {
    fn invalid(message: impl Into<String>) -> Self {
        Self { code: EXIT_INVALID, message: message.into() }
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::IterationBudgetExceeded { .. }) { EXIT_BUDGET } else { EXIT_INVALID };
        Self { code, message: e.to_string() }
    }
}

impl From<FormatError> for CommandError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Core(c) => c.into(),
            FormatError::Io { .. } => Self { code: EXIT_IO, message: e.to_string() },
            other => Self::invalid(other.to_string()),
        }
    }
}

fn write_out(path: &Path, text: &str) -> Result<(), CommandError> {
    fs::write(path, text).map_err(|e| CommandError { code: EXIT_IO, message: format!("cannot write {}: {e}", path.display()) })
}

/// Computes `O_{k*}` for a problem file. Stability warnings are returned alongside.
pub fn compute(
    problem: &ProblemFile,
    k_max: Option<usize>,
    seed: Option<u64>,
    solver: &RayonSolver,
) -> Result<(DescriptionFile, Option<String>), CommandError> {
    let spec = problem.to_spec()?;
    let opts = problem.iterate_options(k_max, seed);
    let desc = run_problem_with(&spec, &opts, solver)?;
    let warning = desc.stability.warning();
    Ok((DescriptionFile::from_description(&desc, problem)?, warning))
}

pub fn compute_file(
    problem_path: &Path,
    out: Option<&Path>,
    k_max: Option<usize>,
    seed: Option<u64>,
) -> Result<(DescriptionFile, Option<String>, String), CommandError> {
    let problem = ProblemFile::load(problem_path)?;
    let (file, warning) = compute(&problem, k_max, seed, &RayonSolver::from_env())?;
    let json = file.to_json();
    if let Some(path) = out {
        write_out(path, &json)?;
    }
    Ok((file, warning, json))
}

pub fn parse_point(text: &str) -> Result<Vec<f64>, CommandError> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CommandError::invalid(format!("bad coordinate {s:?} in {text:?}"))))
        .collect()
}

/// `inside` or `outside`.
pub fn check_file(description_path: &Path, point: &[f64]) -> Result<&'static str, CommandError> {
    let desc = DescriptionFile::load(description_path)?.to_description()?;
    Ok(if desc.contains(point)? { "inside" } else { "outside" })
}

/// Parses `lo1,hi1,lo2,hi2,…` into per-axis bounds.
pub fn parse_box(text: &str) -> Result<(Vec<f64>, Vec<f64>), CommandError> {
    let v = parse_point(text)?;
    if v.is_empty() || v.len() % 2 != 0 {
        return Err(CommandError::invalid(format!("box needs lo,hi pairs per axis, got {text:?}")));
    }
    let (lo, hi): (Vec<f64>, Vec<f64>) = v.chunks(2).map(|c| (c[0], c[1])).unzip();
    if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
        return Err(CommandError::invalid(format!("box bounds must satisfy lo <= hi, got {text:?}")));
    }
    Ok((lo, hi))
}

/// Decimal with at most 12 significant digits and no exponent.
pub fn format_decimal(v: f64) -> String {
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

/// Header `x1,…,xn,member`, one LF-terminated row per grid point.
pub fn scan_csv(scan: &GridScan) -> String {
    let n = scan.lo.len();
    let mut out = String::new();
    for i in 1..=n {
        let _ = write!(out, "x{i},");
    }
    out.push_str("member\n");
    for (p, member) in scan.points() {
        for c in &p {
            out.push_str(&format_decimal(*c));
            out.push(',');
        }
        out.push_str(if member { "1\n" } else { "0\n" });
    }
    out
}

pub fn scan_file(
    description_path: &Path,
    lo: &[f64],
    hi: &[f64],
    resolution: usize,
    out: Option<&Path>,
) -> Result<String, CommandError> {
    if resolution == 0 {
        return Err(CommandError::invalid("resolution must be at least 1"));
    }
    let desc = DescriptionFile::load(description_path)?.to_description()?;
    let scan = RayonSolver::from_env().grid_scan(&desc, lo, hi, resolution)?;
    let csv = scan_csv(&scan);
    if let Some(path) = out {
        write_out(path, &csv)?;
    }
    Ok(csv)
}

/// One benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub seed: u64,
    /// `(N_iter, N_const)`, or the exit code and message of the failure.
    pub outcome: Result<(usize, usize), (i32, String)>,
}

/// Runs `count` random switched instances with seeds `seed, seed+1, …`.
pub fn bench(n: usize, count: usize, seed: u64, k_max: Option<usize>, pool: &RayonSolver) -> Vec<BenchRow> {
    let mut opts = IterateOptions::default();
    if let Some(k) = k_max {
        opts.k_max = k;
    }
    pool.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|i| {
                let s = seed + i;
                let outcome = random_instance_example3(n, s)
                    .and_then(|spec| run_switched(&spec, &opts))
                    .map(|d| (d.k_star, d.constraint_count()))
                    .map_err(|e| {
                        let e = CommandError::from(e);
                        (e.code, e.message)
                    });
                BenchRow { seed: s, outcome }
            })
            .collect()
    })
}

/// Markdown report: per-instance rows, then means over the instances that terminated.
pub fn bench_report(n: usize, seed: u64, rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Random switched systems, n = {n}\n");
    let _ = writeln!(out, "Instances: {}, first seed: {seed}\n", rows.len());
    out.push_str("| instance | seed | N_iter | N_const |\n|---:|---:|---:|---:|\n");
    for (i, r) in rows.iter().enumerate() {
        match &r.outcome {
            Ok((k, c)) => {
                let _ = writeln!(out, "| {i} | {} | {k} | {c} |", r.seed);
            }
            Err((_, e)) => {
                let _ = writeln!(out, "| {i} | {} | failed: {e} | - |", r.seed);
            }
        }
    }
    let done: Vec<(usize, usize)> = rows.iter().filter_map(|r| r.outcome.clone().ok()).collect();
    out.push('\n');
    if done.is_empty() {
        out.push_str("No terminated instances.\n");
    } else {
        let m = done.len() as f64;
        let _ = writeln!(out, "Terminated: {} of {}", done.len(), rows.len());
        let _ = writeln!(out, "Mean N_iter: {:.2}", done.iter().map(|d| d.0 as f64).sum::<f64>() / m);
        let _ = writeln!(out, "Mean N_const: {:.2}", done.iter().map(|d| d.1 as f64).sum::<f64>() / m);
    }
    out
}

pub fn bench_file(
    n: usize,
    count: usize,
    seed: u64,
    k_max: Option<usize>,
    out: Option<&Path>,
) -> Result<String, CommandError> {
    let rows = bench(n, count, seed, k_max, &RayonSolver::from_env());
    let report = bench_report(n, seed, &rows);
    if let Some(path) = out {
        write_out(path, &report)?;
    }
    if let Some((seed, (code, message))) = rows.iter().find_map(|r| r.outcome.as_ref().err().map(|e| (r.seed, e))) {
        return Err(CommandError { code: *code, message: format!("instance with seed {seed} failed: {message}") });
    }
    Ok(report)
}
