//! Command-line surface: `run`, `compare`, `verify` and `partition`.
//!
//! Exit codes: 0 success, 1 failed verification or other error, 2 invalid
//! config or arguments, 3 numeric blow-up.

pub mod config;
pub mod run;
pub mod verify;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::{balanced_labels, default_jobs};
use crate::objectives::dirichlet_partition;
use config::RunConfig;
use verify::Suite;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "asgd-sim", version, about = "Discrete-event simulator for asynchronous SGD")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every algorithm of a config and write one metric file per (algorithm, seed).
    Run(RunArgs),
    /// Like `run`, plus `compare.csv` with seed-averaged curves on a shared virtual-time grid.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Grid points in `compare.csv`.
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Run a property suite and print a JSON report; exits 1 on any failed check.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Shorter horizons and fewer Monte Carlo samples.
        #[arg(long)]
        quick: bool,
        /// Worker threads; defaults to available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Dirichlet label-skew split of balanced labels (or labels read from a file).
    Partition(PartitionArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Concurrent runs; defaults to available parallelism. Each run is serial.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub workers: usize,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of balanced samples, labels `j mod classes`. Ignored with `--labels`.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// File with one non-negative integer label per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Write the worker of every sample, one per line.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
}

/// Map an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::NonFinite { .. } => EXIT_NUMERIC,
        _ => EXIT_FAILURE,
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let text =
        fs::read_to_string(&args.config).map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(out) = &args.out {
        cfg.output.dir = out.display().to_string();
    }
    Ok(cfg)
}

fn run_command(args: &RunArgs, compare_points: Option<usize>) -> Result<i32> {
    let cfg = load_config(args)?;
    let results = run::execute(&cfg, args.jobs.unwrap_or_else(default_jobs))?;
    let written = run::write_outputs(&cfg, &results)?;
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{:<22} {:>10} {:>14} {:>14} {:>8} {:>9}",
        "algorithm", "eta", "final_loss", "avg_grad_sq", "tau_max", "wall_s"
    )?;
    for r in &results {
        writeln!(
            out,
            "{:<22} {:>10.3e} {:>14.6e} {:>14.6e} {:>8} {:>9.3}",
            r.label,
            r.eta,
            r.mean_final_loss(),
            r.mean_avg_grad_norm_sq(),
            r.tau_max(),
            r.wall_secs
        )?;
        if r.candidates.len() > 1 {
            for (eta, score) in &r.candidates {
                match score {
                    Some(s) => writeln!(out, "    eta={eta:e} avg_grad_sq={s:.6e}")?,
                    None => writeln!(out, "    eta={eta:e} diverged")?,
                }
            }
        }
    }
    if let Some(points) = compare_points {
        let path = run::write_comparison(&cfg, &results, points)?;
        writeln!(out, "comparison: {}", path.display())?;
    }
    writeln!(out, "wrote {} files to {}", written.len(), cfg.output.dir)?;
    Ok(0)
}

fn verify_command(suite: Suite, seed: u64, quick: bool, jobs: Option<usize>, report: Option<&PathBuf>) -> Result<i32> {
    let rep = verify::run_suite(suite, seed, quick, jobs.unwrap_or_else(default_jobs))?;
    let text = serde_json::to_string_pretty(&rep)?;
    println!("{text}");
    if let Some(path) = report {
        fs::write(path, format!("{text}\n"))?;
    }
    for c in rep.checks.iter().filter(|c| !c.pass) {
        log::error!("{} failed: value {}", c.name, c.value);
    }
    Ok(if rep.pass { 0 } else { EXIT_FAILURE })
}

fn partition_command(args: &PartitionArgs) -> Result<i32> {
    let labels = match &args.labels {
        Some(path) => fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Config(format!("label {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?,
        None => balanced_labels(args.samples, args.classes),
    };
    let part =
        dirichlet_partition(&labels, args.workers, args.alpha, args.seed).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(path) = &args.assignment {
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        for a in &part.assignment {
            writeln!(w, "{a}")?;
        }
        w.flush()?;
    }
    for &i in &part.empty_workers {
        log::warn!("worker {i} received no samples");
    }
    let report = json!({
        "workers": args.workers,
        "alpha": args.alpha,
        "seed": args.seed,
        "samples": labels.len(),
        "proportions": part.proportions,
        "counts": part.counts,
        "worker_sizes": part.worker_sizes(),
        "empty_workers": part.empty_workers,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Run(a) => run_command(a, None),
        Command::Compare { run, points } => run_command(run, Some(*points)),
        Command::Verify {
            suite,
            seed,
            quick,
            jobs,
            report,
        } => verify_command(*suite, *seed, *quick, *jobs, report.as_ref()),
        Command::Partition(a) => partition_command(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
