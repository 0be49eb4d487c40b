//! Metrics and plot data for filter runs against the truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::commands::{CommandReport, FORECAST_FILE, OUTPUT_FILE};
use crate::error::{config_err, Error, Result};
use crate::filters::{read_output_csv, OutputRow};
use crate::sde::{MeasurementSeries, Trajectory, GRID_TOLERANCE};

pub const METRICS_FILE: &str = "metrics.json";
pub const PLOT_STATES_FILE: &str = "plot_states.dat";
pub const PLOT_P12_FILE: &str = "plot_p12.dat";
pub const PLOT_TRACE_FILE: &str = "plot_trace.dat";

/// A labelled filter run directory.
#[derive(Clone, Debug)]
pub struct RunInput {
    pub label: String,
    pub dir: PathBuf,
}

impl std::str::FromStr for RunInput {
    type Err = Error;

    /// `label=dir`, or just `dir` (labelled by its last path component).
    fn from_str(s: &str) -> Result<Self> {
        let (label, dir) = match s.split_once('=') {
            Some((l, d)) => (l.to_string(), PathBuf::from(d)),
            None => {
                let dir = PathBuf::from(s);
                let label = dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .ok_or_else(|| config_err(format!("cannot label run {s:?}")))?;
                (label, dir)
            }
        };
        if label.is_empty() || label.contains(char::is_whitespace) {
            return Err(config_err(format!("invalid run label {label:?}")));
        }
        Ok(Self { label, dir })
    }
}

/// Squared-error summary of one estimate series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorStats {
    pub n_points: usize,
    pub mse: [f64; 2],
    pub rmse: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetrics {
    /// Posterior mean against truth at the assimilation times.
    pub posterior: ErrorStats,
    /// Time average of the posterior covariance trace.
    pub mean_trace: f64,
    /// Time average of the forecast cross-covariance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_forecast_p12: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasurementMetrics {
    pub n_points: usize,
    /// Mean squared difference between measurements and the observed
    /// truth component; close to R for unbiased noise.
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub runs: BTreeMap<String, RunMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurements: Option<MeasurementMetrics>,
    /// Step-averaged |P12 forecast| difference of each run against the
    /// first run given.
    pub forecast_p12_mean_abs_diff: BTreeMap<String, f64>,
}

/// Truth state at time `t`, which must lie on the truth grid.
pub fn truth_at(truth: &Trajectory, t: f64) -> Result<&[f64]> {
    let pos = (t - truth.t0) / truth.dt;
    let idx = pos.round();
    if idx < 0.0 || (pos - idx).abs() > 1e-6 || idx as usize >= truth.len() {
        return Err(Error::Misaligned(format!(
            "time {t} is not on the truth grid"
        )));
    }
    let idx = idx as usize;
    if (truth.time(idx) - t).abs() > GRID_TOLERANCE * t.abs().max(1.0) * 1e3 {
        return Err(Error::Misaligned(format!(
            "time {t} is not on the truth grid"
        )));
    }
    Ok(&truth.states[idx])
}

/// Sort rows by time and reject duplicates.
pub fn sorted_rows(mut rows: Vec<OutputRow>) -> Result<Vec<OutputRow>> {
    rows.sort_by(|a, b| a.t.total_cmp(&b.t));
    if rows.windows(2).any(|w| w[0].t == w[1].t) {
        return Err(Error::Misaligned("duplicate time in filter output".into()));
    }
    Ok(rows)
}

/// Errors of the posterior means over rows after the initial time.
pub fn error_stats(rows: &[OutputRow], truth: &Trajectory) -> Result<ErrorStats> {
    let mut sum = [0.0; 2];
    let mut n = 0usize;
    for r in rows.iter().filter(|r| r.t > truth.t0) {
        let x = truth_at(truth, r.t)?;
        for i in 0..2 {
            let e = r.belief.mean[i] - x[i];
            sum[i] += e * e;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Misaligned(
            "no filter rows after the initial time".into(),
        ));
    }
    let mse = [sum[0] / n as f64, sum[1] / n as f64];
    Ok(ErrorStats {
        n_points: n,
        mse,
        rmse: [mse[0].sqrt(), mse[1].sqrt()],
    })
}

pub fn measurement_metrics(
    meas: &MeasurementSeries,
    truth: &Trajectory,
) -> Result<MeasurementMetrics> {
    let mut sum = 0.0;
    for (&t, &y) in meas.times.iter().zip(&meas.values) {
        let x = truth_at(truth, t)?;
        sum += (y - x[1]) * (y - x[1]);
    }
    let n = meas.len();
    if n == 0 {
        return Err(config_err("no measurements to compare"));
    }
    Ok(MeasurementMetrics {
        n_points: n,
        mse: sum / n as f64,
    })
}

struct LoadedRun {
    label: String,
    posterior: Vec<OutputRow>,
    forecast: Option<Vec<OutputRow>>,
}

fn same_times(a: &[OutputRow], b: &[OutputRow]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x.t - y.t).abs() <= 1e-9 * x.t.abs().max(1.0))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn column_header(out: &mut String, names: &[String]) {
    out.push('#');
    for n in names {
        out.push(' ');
        out.push_str(n);
    }
    out.push('\n');
}

fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:.10e}").expect("writing to a String");
    }
    out.push('\n');
}

/// Compare filter runs with the truth; writes metrics and columnar plot data.
pub fn cmd_compare(
    runs: &[RunInput],
    truth_path: &Path,
    measurements_path: Option<&Path>,
    out: &Path,
) -> Result<CommandReport> {
    if runs.is_empty() {
        return Err(config_err("compare needs at least one run"));
    }
    let mut labels: Vec<&str> = runs.iter().map(|r| r.label.as_str()).collect();
    labels.sort_unstable();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(config_err("run labels must be unique"));
    }
    for p in std::iter::once(truth_path).chain(measurements_path) {
        if !p.is_file() {
            return Err(config_err(format!("missing input file {}", p.display())));
        }
    }
    let truth = Trajectory::read_csv(truth_path)?;
    if truth.states.first().map_or(0, Vec::len) != 2 {
        return Err(config_err("truth file must have columns t,x1,x2"));
    }
    let meas = measurements_path
        .map(MeasurementSeries::read_csv)
        .transpose()?;

    let mut loaded = Vec::with_capacity(runs.len());
    for r in runs {
        let post_path = r.dir.join(OUTPUT_FILE);
        if !post_path.is_file() {
            return Err(config_err(format!(
                "missing input file {}",
                post_path.display()
            )));
        }
        let posterior = sorted_rows(read_output_csv(&post_path)?)?;
        let fc_path = r.dir.join(FORECAST_FILE);
        let forecast = if fc_path.is_file() {
            Some(sorted_rows(read_output_csv(&fc_path)?)?)
        } else {
            None
        };
        loaded.push(LoadedRun {
            label: r.label.clone(),
            posterior,
            forecast,
        });
    }
    let grid = &loaded[0].posterior;
    for r in &loaded[1..] {
        if !same_times(grid, &r.posterior) {
            return Err(Error::Misaligned(format!(
                "run {} has a different time grid from run {}",
                r.label, loaded[0].label
            )));
        }
    }

    let mut metrics = Metrics {
        runs: BTreeMap::new(),
        measurements: meas
            .as_ref()
            .map(|m| measurement_metrics(m, &truth))
            .transpose()?,
        forecast_p12_mean_abs_diff: BTreeMap::new(),
    };
    for r in &loaded {
        metrics.runs.insert(
            r.label.clone(),
            RunMetrics {
                posterior: error_stats(&r.posterior, &truth)?,
                mean_trace: mean(
                    r.posterior
                        .iter()
                        .map(|x| x.belief.cov[0][0] + x.belief.cov[1][1]),
                ),
                mean_forecast_p12: r
                    .forecast
                    .as_ref()
                    .map(|f| mean(f.iter().map(|x| x.belief.cov[0][1]))),
            },
        );
    }
    if let Some(base) = loaded[0].forecast.as_ref() {
        for r in &loaded[1..] {
            if let Some(f) = r.forecast.as_ref() {
                if !same_times(base, f) {
                    return Err(Error::Misaligned(format!(
                        "forecast grid of run {} differs",
                        r.label
                    )));
                }
                let d = mean(
                    base.iter()
                        .zip(f)
                        .map(|(a, b)| (a.belief.cov[0][1] - b.belief.cov[0][1]).abs()),
                );
                metrics
                    .forecast_p12_mean_abs_diff
                    .insert(r.label.clone(), d);
            }
        }
    }

    fs::create_dir_all(out)?;
    let mut report = CommandReport::default();
    let metrics_path = out.join(METRICS_FILE);
    fs::write(
        &metrics_path,
        serde_json::to_string_pretty(&metrics)? + "\n",
    )?;
    report.written.push(metrics_path);

    // states: truth, measurement and per-run mean +/- standard deviation
    let mut names = vec!["t".to_string(), "truth_x1".into(), "truth_x2".into()];
    if meas.is_some() {
        names.push("y".into());
    }
    for r in &loaded {
        for c in ["mean1", "mean2", "sd1", "sd2"] {
            names.push(format!("{}_{c}", r.label));
        }
    }
    let mut text = String::new();
    column_header(&mut text, &names);
    for (i, row) in grid.iter().enumerate() {
        let x = truth_at(&truth, row.t)?;
        let mut v = vec![row.t, x[0], x[1]];
        if let Some(m) = &meas {
            let y = m
                .times
                .iter()
                .position(|&t| (t - row.t).abs() <= 1e-9 * t.abs().max(1.0))
                .map_or(f64::NAN, |j| m.values[j]);
            v.push(y);
        }
        for r in &loaded {
            let b = r.posterior[i].belief;
            v.extend([
                b.mean[0],
                b.mean[1],
                b.cov[0][0].max(0.0).sqrt(),
                b.cov[1][1].max(0.0).sqrt(),
            ]);
        }
        push_row(&mut text, &v);
    }
    let path = out.join(PLOT_STATES_FILE);
    fs::write(&path, text)?;
    report.written.push(path);

    // forecast cross-covariance, one column per run that has a forecast file
    let with_fc: Vec<&LoadedRun> = loaded.iter().filter(|r| r.forecast.is_some()).collect();
    if let Some(first) = with_fc.first() {
        let base = first.forecast.as_ref().expect("filtered");
        let mut names = vec!["t".to_string()];
        names.extend(with_fc.iter().map(|r| format!("{}_p12", r.label)));
        let mut text = String::new();
        column_header(&mut text, &names);
        for (i, row) in base.iter().enumerate() {
            let mut v = vec![row.t];
            for r in &with_fc {
                let f = r.forecast.as_ref().expect("filtered");
                if !same_times(base, f) {
                    return Err(Error::Misaligned(format!(
                        "forecast grid of run {} differs",
                        r.label
                    )));
                }
                v.push(f[i].belief.cov[0][1]);
            }
            push_row(&mut text, &v);
        }
        let path = out.join(PLOT_P12_FILE);
        fs::write(&path, text)?;
        report.written.push(path);
    }

    // posterior covariance trace
    let mut names = vec!["t".to_string()];
    names.extend(loaded.iter().map(|r| format!("{}_trace", r.label)));
    let mut text = String::new();
    column_header(&mut text, &names);
    for (i, row) in grid.iter().enumerate() {
        let mut v = vec![row.t];
        v.extend(loaded.iter().map(|r| {
            let c = r.posterior[i].belief.cov;
            c[0][0] + c[1][1]
        }));
        push_row(&mut text, &v);
    }
    let path = out.join(PLOT_TRACE_FILE);
    fs::write(&path, text)?;
    report.written.push(path);

    Ok(report)
}
