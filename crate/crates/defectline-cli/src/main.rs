//! Reproducible experiment runner for the defect-line percolation toolkit.
//!
//! Every subcommand reads a line-oriented `key = value` configuration (see
//! `config`), produces deterministic output files given (config, seed) — each
//! starting with a self-describing JSON header line — and exits nonzero with
//! a machine-readable JSON error on any failure. Worker counts never affect
//! results: tallies are integers merged exactly.

mod commands;
mod config;
mod error;
mod output;
mod verify;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "defectline",
    version,
    about = "Monte Carlo and exact numerics for bond percolation with a defect line"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (line-oriented `key = value`).
    #[arg(long)]
    config: PathBuf,
    /// Seed override; takes precedence over `run.seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (fallback: DEFECTLINE_WORKERS, then all cores).
    /// Never affects results, only wall time.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Direct-frequency connectivity estimates, one row per (p, p_line, n)
    Connectivity(RunArgs),
    /// Decay-rate fit across a grid of line probabilities
    XiScan(RunArgs),
    /// Decay-rate gap above the homogeneous point, with censoring
    GapCurve(RunArgs),
    /// Polynomial-correction exponent at one line probability
    Prefactor(RunArgs),
    /// Conditioned-cluster geometry records (cone renewals, line statistics)
    Geometry(RunArgs),
    /// Pinning free energy scan and optional local-time deviation probe
    Pinning(RunArgs),
    /// Renewal limit theorem on named demonstration kernels
    RenewalDemo(RunArgs),
    /// Exact-identity and closed-form verification battery
    Verify {
        /// Worker thread count (the battery itself is sequential).
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn set_workers(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("DEFECTLINE_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        // Zero lets the pool pick automatically, matching the flag's default.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn run_with(
    name: &'static str,
    args: &RunArgs,
    f: impl FnOnce(&ExperimentConfig, &Path) -> Result<Vec<PathBuf>, CliError>,
) -> Result<i32, CliError> {
    set_workers(args.workers);
    let text = std::fs::read_to_string(&args.config)?;
    let cfg = config::load(name, &text, args.seed)?;
    for path in f(&cfg, &args.out)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Connectivity(args) => run_with("connectivity", &args, |cfg, out| {
            commands::connectivity(cfg, out).map(|p| vec![p])
        }),
        Command::XiScan(args) => run_with("xi-scan", &args, |cfg, out| {
            commands::xi_scan(cfg, out).map(|p| vec![p])
        }),
        Command::GapCurve(args) => run_with("gap-curve", &args, |cfg, out| {
            commands::gap_curve(cfg, out).map(|p| vec![p])
        }),
        Command::Prefactor(args) => run_with("prefactor", &args, |cfg, out| {
            commands::prefactor(cfg, out).map(|p| vec![p])
        }),
        Command::Geometry(args) => run_with("geometry", &args, |cfg, out| {
            commands::geometry(cfg, out).map(|p| vec![p])
        }),
        Command::Pinning(args) => {
            run_with("pinning", &args, |cfg, out| commands::pinning(cfg, out))
        }
        Command::RenewalDemo(args) => run_with("renewal-demo", &args, |cfg, out| {
            commands::renewal_demo(cfg, out).map(|p| vec![p])
        }),
        Command::Verify { workers } => {
            set_workers(workers);
            Ok(if verify::run()? { 0 } else { 1 })
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!(
                "{}",
                serde_json::json!({
                    "error": { "kind": err.kind(), "message": err.to_string() }
                })
            );
            2
        }
    };
    std::process::exit(code);
}
