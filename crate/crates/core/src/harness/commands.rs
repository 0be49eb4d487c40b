//! The pipeline stages behind the CLI subcommands. Each command is a pure
//! function of its configuration, its input files and the master seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, SEED_LABELS};
use crate::dual::{build_dual_table, DualProcess, DualTable, DualTableSet, FORECAST_EXPONENTS};
use crate::error::{config_err, Error, Result};
use crate::filters::{run_filter, FilterKind, FilterSetup, Stage};
use crate::io::sha256_hex;
use crate::rng::stream_rng;
use crate::sde::MeasurementSeries;

pub const TRUTH_FILE: &str = "truth.csv";
pub const MEASUREMENTS_FILE: &str = "measurements.csv";
pub const NETWORK_FILE: &str = "network.json";
pub const OUTPUT_FILE: &str = "filter_output.csv";
pub const FORECAST_FILE: &str = "filter_forecast.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// File name of forecast table `k` (0-based): `c1.json` … `c5.json`.
pub fn table_file(k: usize) -> String {
    format!("c{}.json", k + 1)
}

/// What a command produced, for reporting.
#[derive(Debug, Default)]
pub struct CommandReport {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(config_err(format!("missing input file {}", path.display())))
    }
}

/// Simulate the truth on the fine grid and sample noisy measurements.
pub fn cmd_simulate_truth(cfg: &ExperimentConfig, out: &Path) -> Result<CommandReport> {
    cfg.validate()?;
    ensure_dir(out)?;
    let model = cfg.model()?;
    let mm = cfg.measurement_model()?;
    let t = &cfg.truth;
    let traj = model.simulate_truth(
        &t.x0,
        t.dt,
        t.t_end,
        &mut stream_rng(cfg.seed_for("truth"), 0),
    )?;
    let meas = traj.observe(&mm, &mut stream_rng(cfg.seed_for("observe"), 0))?;
    let truth_path = out.join(TRUTH_FILE);
    let meas_path = out.join(MEASUREMENTS_FILE);
    traj.write_csv(&truth_path)?;
    meas.write_csv(&meas_path)?;
    Ok(CommandReport {
        written: vec![truth_path, meas_path],
        warnings: Vec::new(),
    })
}

/// Dump the derived dual process (reactions and weight polynomial).
pub fn cmd_derive_dual(cfg: &ExperimentConfig, out: &Path) -> Result<CommandReport> {
    cfg.validate()?;
    ensure_dir(out)?;
    let process = DualProcess::from_model(&cfg.model()?)?;
    let path = out.join(NETWORK_FILE);
    fs::write(&path, process.to_json())?;
    Ok(CommandReport {
        written: vec![path],
        warnings: Vec::new(),
    })
}

/// Build and save the five forecast tables. In strict mode a truncation
/// share above the configured threshold is an error; otherwise a warning.
pub fn cmd_gen_dual_tables(
    cfg: &ExperimentConfig,
    out: &Path,
    strict: bool,
) -> Result<CommandReport> {
    cfg.validate()?;
    ensure_dir(out)?;
    let process = DualProcess::from_model(&cfg.model()?)?;
    let mut report = CommandReport::default();
    for (k, exp) in FORECAST_EXPONENTS.iter().enumerate() {
        let table = build_dual_table(&process, &[0, exp[0], exp[1]], &cfg.table_build(k))?;
        match table.check_truncation(cfg.dual.truncation_threshold) {
            Ok(()) => {}
            Err(e) if strict => return Err(e),
            Err(e) => report.warnings.push(format!("{}: {e}", table_file(k))),
        }
        let path = out.join(table_file(k));
        table.save(&path)?;
        report.written.push(path);
    }
    Ok(report)
}

/// Load the five tables written by [`cmd_gen_dual_tables`], checking them
/// against the configured model.
pub fn load_table_set(cfg: &ExperimentConfig, dir: &Path) -> Result<DualTableSet> {
    let process = DualProcess::from_model(&cfg.model()?)?;
    let mut tables = Vec::with_capacity(5);
    for k in 0..5 {
        let path = dir.join(table_file(k));
        require(&path)?;
        tables.push(DualTable::load_for(&path, &process)?);
    }
    DualTableSet::new(tables.try_into().expect("five tables"))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    filter: FilterKind,
    config: &'a ExperimentConfig,
    seeds: BTreeMap<&'static str, u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    warnings: Vec<String>,
}

/// Run one filter over `input/measurements.csv` (and, for the duality
/// filter, `input/c1.json` … `input/c5.json`).
pub fn cmd_run(
    kind: FilterKind,
    cfg: &ExperimentConfig,
    input: &Path,
    out: &Path,
) -> Result<CommandReport> {
    cfg.validate()?;
    let meas_path = input.join(MEASUREMENTS_FILE);
    require(&meas_path)?;
    let meas = MeasurementSeries::read_csv(&meas_path)?;
    let mm = cfg.measurement_model()?;
    let mut inputs = BTreeMap::new();
    inputs.insert(MEASUREMENTS_FILE.to_string(), file_hash(&meas_path)?);

    let output = match kind {
        FilterKind::Enkf => {
            let model = cfg.model()?;
            let config = cfg.enkf_config();
            run_filter(
                &FilterSetup::Enkf {
                    model: &model,
                    mm: &mm,
                    config: &config,
                },
                &meas,
            )?
        }
        FilterKind::Dukf => {
            let tables = load_table_set(cfg, input)?;
            for k in 0..5 {
                inputs.insert(table_file(k), file_hash(&input.join(table_file(k)))?);
            }
            let config = cfg.dukf_config();
            run_filter(
                &FilterSetup::Dukf {
                    mm: &mm,
                    tables: &tables,
                    config: &config,
                },
                &meas,
            )?
        }
    };

    ensure_dir(out)?;
    let post_path = out.join(OUTPUT_FILE);
    let fc_path = out.join(FORECAST_FILE);
    output.write_csv(&post_path, Stage::Posterior)?;
    output.write_csv(&fc_path, Stage::Forecast)?;
    let mut outputs = BTreeMap::new();
    outputs.insert(OUTPUT_FILE.to_string(), file_hash(&post_path)?);
    outputs.insert(FORECAST_FILE.to_string(), file_hash(&fc_path)?);
    let warnings: Vec<String> = output.warnings().cloned().collect();
    let manifest = Manifest {
        command: "run",
        filter: kind,
        config: cfg,
        seeds: SEED_LABELS.iter().map(|&l| (l, cfg.seed_for(l))).collect(),
        inputs,
        outputs,
        warnings: warnings.clone(),
    };
    let manifest_path = out.join(MANIFEST_FILE);
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).map_err(Error::from)? + "\n",
    )?;
    Ok(CommandReport {
        written: vec![post_path, fc_path, manifest_path],
        warnings,
    })
}
