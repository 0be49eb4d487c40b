//! `dukf` command-line front end.
//!
//! Exit status: 0 on success, 2 on invalid input or configuration, 3 on a
//! numerical failure (blow-up, truncation, unusable estimate).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dukf_core::harness::{
    cmd_compare, cmd_derive_dual, cmd_gen_dual_tables, cmd_run, cmd_simulate_truth, CommandReport,
    ExperimentConfig, RunInput, TRUTH_FILE,
};
use dukf_core::{Error, FilterKind, Result};

#[derive(Parser)]
#[command(
    name = "dukf",
    version,
    about = "Ensemble and duality-based Kalman filtering experiments"
)]
struct Cli {
    /// Experiment configuration (JSON); defaults to the reference scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Treat a truncation-threshold breach as an error.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads for dual-table generation.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory holding measurements.csv and c1..c5.json for `run`;
    /// defaults to --out.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the true trajectory and noisy measurements.
    SimulateTruth,
    /// Write the derived dual reaction network as JSON.
    DeriveDual,
    /// Pre-compute the five dual tables c1..c5.
    GenDualTables,
    /// Run a filter over the measurements.
    Run {
        #[arg(long, value_parser = parse_filter)]
        filter: FilterKind,
    },
    /// Compare filter runs with the truth and emit metrics and plot data.
    Compare {
        /// Run directory, optionally labelled as `label=dir`; repeatable.
        #[arg(long = "run", required = true)]
        runs: Vec<RunInput>,
        /// Truth trajectory; defaults to <out>/truth.csv.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Measurements to score against the truth as well.
        #[arg(long)]
        measurements: Option<PathBuf>,
    },
}

fn parse_filter(s: &str) -> std::result::Result<FilterKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.workers.is_some() {
        cfg.dual.workers = cli.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<CommandReport> {
    let cfg = load_config(cli)?;
    let out = &cli.out;
    match &cli.command {
        Command::SimulateTruth => cmd_simulate_truth(&cfg, out),
        Command::DeriveDual => cmd_derive_dual(&cfg, out),
        Command::GenDualTables => cmd_gen_dual_tables(&cfg, out, cli.strict),
        Command::Run { filter } => cmd_run(*filter, &cfg, cli.input.as_deref().unwrap_or(out), out),
        Command::Compare {
            runs,
            truth,
            measurements,
        } => {
            let truth = truth.clone().unwrap_or_else(|| out.join(TRUTH_FILE));
            cmd_compare(runs, &truth, measurements.as_deref(), out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for p in &report.written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
