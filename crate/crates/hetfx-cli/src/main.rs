//! Command-line front end: simulate synthetic data, fit the honest-split
//! CATE ensemble, attach bootstrap inference, produce report tables and
//! curves, and evaluate assignment rules. Every command is driven by one
//! TOML config and writes its artifacts plus a manifest into --out;
//! identical config and seed reproduce every artifact byte for byte.

mod commands;
mod config;
mod manifest;
mod output;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "hetfx", version, about = "Heterogeneous treatment effect estimation pipeline")]
struct Cli {
    /// Worker-thread cap (HETFX_WORKERS as fallback; all cores otherwise).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing; one run per directory).
    #[arg(long)]
    out: PathBuf,
    /// Master seed override (otherwise `seed` from the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a ground-truth sidecar.
    Simulate(CommonArgs),
    /// Estimate weights and the honest-split CATE ensemble.
    Fit(CommonArgs),
    /// Bootstrap standard errors and effect tables (requires fit).
    Infer(CommonArgs),
    /// Distribution curves, split tables, and correlations (requires fit).
    Report(CommonArgs),
    /// Evaluate assignment rules on the bagged CATEs (requires fit).
    Policy(CommonArgs),
}

fn resolve_workers(cli: Option<usize>) -> Option<usize> {
    cli.or_else(|| {
        std::env::var("HETFX_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(workers) = resolve_workers(cli.workers) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global()
            .context("cannot configure the worker pool")?;
    }

    let args = match &cli.command {
        Command::Simulate(a) | Command::Fit(a) | Command::Infer(a) | Command::Report(a)
        | Command::Policy(a) => a,
    };
    let (run_config, raw) = RunConfig::load(&args.config)?;
    let seed = run_config.effective_seed(args.seed)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;

    match &cli.command {
        Command::Simulate(a) => commands::simulate::run(&run_config, &raw, &a.out, seed),
        Command::Fit(a) => commands::fit::run(&run_config, &raw, &a.out, seed),
        Command::Infer(a) => commands::infer::run(&run_config, &raw, &a.out, seed),
        Command::Report(a) => commands::report::run(&run_config, &raw, &a.out, seed),
        Command::Policy(a) => commands::policy::run(&run_config, &raw, &a.out, seed),
    }
}
