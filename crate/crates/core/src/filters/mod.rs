//! Forecast/assimilation loops for the ensemble and duality-based filters.

pub mod dukf;
pub mod enkf;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dukf::{dukf_assimilate, dukf_forecast, DukfConfig, DukfForecast};
pub use enkf::{
    enkf_assimilate, enkf_forecast, ensemble_gain, EnkfAssimilation, EnkfConfig, Ensemble,
};

use crate::dual::DualTableSet;
use crate::error::{config_err, Error, Result};
use crate::io::{fmt_f64, parse_f64};
use crate::moments::GaussianBelief;
use crate::rng::stream_rng;
use crate::sde::{MeasurementModel, MeasurementSeries, PolynomialSdeModel};

/// K = P h / (h' P h + r)
pub(crate) fn kalman_gain(p: &[[f64; 2]; 2], h: [f64; 2], r: f64) -> Result<[f64; 2]> {
    let ph = [
        p[0][0] * h[0] + p[0][1] * h[1],
        p[1][0] * h[0] + p[1][1] * h[1],
    ];
    let s = h[0] * ph[0] + h[1] * ph[1] + r;
    if ph == [0.0, 0.0] {
        return Ok([0.0, 0.0]);
    }
    if !(s > 0.0) {
        return Err(Error::BlowUp(format!(
            "innovation variance {s} is not positive"
        )));
    }
    Ok([ph[0] / s, ph[1] / s])
}

fn check_model_dim(model: &PolynomialSdeModel) -> Result<()> {
    if model.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: model.dim(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Enkf,
    Dukf,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Enkf => "enkf",
            FilterKind::Dukf => "dukf",
        })
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enkf" => Ok(FilterKind::Enkf),
            "dukf" => Ok(FilterKind::Dukf),
            other => Err(config_err(format!("unknown filter {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterStep {
    pub t: f64,
    pub forecast: GaussianBelief,
    pub posterior: GaussianBelief,
    pub gain: [f64; 2],
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_tilde: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterOutput {
    pub kind: FilterKind,
    pub t0: f64,
    pub initial: GaussianBelief,
    pub steps: Vec<FilterStep>,
    pub provenance: Provenance,
}

/// Which belief a CSV row carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Forecast,
    Posterior,
}

pub const OUTPUT_HEADER: [&str; 8] = ["t", "mean1", "mean2", "p11", "p12", "p22", "k1", "k2"];

/// One parsed output row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputRow {
    pub t: f64,
    pub belief: GaussianBelief,
    pub gain: [f64; 2],
}

impl FilterOutput {
    pub fn warnings(&self) -> impl Iterator<Item = &String> {
        self.steps.iter().flat_map(|s| &s.warnings)
    }

    /// Rows of `t, mean1, mean2, p11, p12, p22, k1, k2`. The posterior file
    /// starts with the initial belief at `t0` (gain 0).
    pub fn rows(&self, stage: Stage) -> Vec<OutputRow> {
        let mut rows = Vec::with_capacity(self.steps.len() + 1);
        if stage == Stage::Posterior {
            rows.push(OutputRow {
                t: self.t0,
                belief: self.initial,
                gain: [0.0, 0.0],
            });
        }
        rows.extend(self.steps.iter().map(|s| OutputRow {
            t: s.t,
            belief: match stage {
                Stage::Forecast => s.forecast,
                Stage::Posterior => s.posterior,
            },
            gain: s.gain,
        }));
        rows
    }

    pub fn write_csv(&self, path: &Path, stage: Stage) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(OUTPUT_HEADER)?;
        for r in self.rows(stage) {
            let c = r.belief.cov;
            w.write_record(
                [
                    r.t,
                    r.belief.mean[0],
                    r.belief.mean[1],
                    c[0][0],
                    c[0][1],
                    c[1][1],
                    r.gain[0],
                    r.gain[1],
                ]
                .map(fmt_f64),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn read_output_csv(path: &Path) -> Result<Vec<OutputRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != OUTPUT_HEADER {
        return Err(config_err(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec.iter().map(parse_f64).collect::<Result<Vec<_>>>()?;
        if v.len() != 8 {
            return Err(config_err("filter output rows must have 8 columns"));
        }
        rows.push(OutputRow {
            t: v[0],
            belief: GaussianBelief {
                mean: [v[1], v[2]],
                cov: [[v[3], v[4]], [v[4], v[5]]],
            },
            gain: [v[6], v[7]],
        });
    }
    Ok(rows)
}

/// What to run and with which inputs.
pub enum FilterSetup<'a> {
    Enkf {
        model: &'a PolynomialSdeModel,
        mm: &'a MeasurementModel,
        config: &'a EnkfConfig,
    },
    Dukf {
        mm: &'a MeasurementModel,
        tables: &'a DualTableSet,
        config: &'a DukfConfig,
    },
}

impl FilterSetup<'_> {
    pub fn kind(&self) -> FilterKind {
        match self {
            FilterSetup::Enkf { .. } => FilterKind::Enkf,
            FilterSetup::Dukf { .. } => FilterKind::Dukf,
        }
    }
}

/// Alternate forecast and assimilation over every measurement, starting
/// from time 0.
pub fn run_filter(
    setup: &FilterSetup<'_>,
    measurements: &MeasurementSeries,
) -> Result<FilterOutput> {
    measurements.validate()?;
    if let Some(&t) = measurements.times.first() {
        if !(t > 0.0) {
            return Err(config_err(
                "measurement times must be after the initial time 0",
            ));
        }
    }
    match setup {
        FilterSetup::Enkf { model, mm, config } => run_enkf(model, mm, config, measurements),
        FilterSetup::Dukf { mm, tables, config } => run_dukf(mm, tables, config, measurements),
    }
}

fn run_enkf(
    model: &PolynomialSdeModel,
    mm: &MeasurementModel,
    cfg: &EnkfConfig,
    meas: &MeasurementSeries,
) -> Result<FilterOutput> {
    cfg.validate()?;
    check_model_dim(model)?;
    let mut rng = stream_rng(cfg.seed, 0);
    let init = GaussianBelief::new(cfg.init_mean, cfg.init_cov)?;
    let mut ens = Ensemble::sample(&init, cfg.ensemble_size, &mut rng);
    let initial = ens.belief();
    let mut prev = 0.0;
    let mut steps = Vec::with_capacity(meas.len());
    for (&t, &y) in meas.times.iter().zip(&meas.values) {
        let forecast = enkf_forecast(&ens, model, cfg.integrator_dt, t - prev, &mut rng)?;
        let update = enkf_assimilate(&forecast, y, mm, &mut rng)?;
        ens = update.ensemble;
        steps.push(FilterStep {
            t,
            forecast: update.forecast,
            posterior: ens.belief(),
            gain: update.gain,
            warnings: Vec::new(),
        });
        prev = t;
    }
    Ok(FilterOutput {
        kind: FilterKind::Enkf,
        t0: 0.0,
        initial,
        steps,
        provenance: Provenance {
            seed: Some(cfg.seed),
            ensemble_size: Some(cfg.ensemble_size),
            ..Default::default()
        },
    })
}

fn run_dukf(
    mm: &MeasurementModel,
    tables: &DualTableSet,
    cfg: &DukfConfig,
    meas: &MeasurementSeries,
) -> Result<FilterOutput> {
    let tau_tilde = tables.tau_tilde();
    let initial = GaussianBelief::new(cfg.initial.mean, cfg.initial.cov)?;
    let mut belief = initial;
    let mut prev = 0.0;
    let mut steps = Vec::with_capacity(meas.len());
    for (&t, &y) in meas.times.iter().zip(&meas.values) {
        let r_ts = (t - prev) / tau_tilde;
        if !(r_ts <= 1.0 + 1e-9) {
            return Err(config_err(format!(
                "interval {} exceeds the dual table horizon {tau_tilde}",
                t - prev
            )));
        }
        let fc = dukf_forecast(&belief, tables, r_ts.min(1.0), cfg)?;
        let (post, gain) = dukf_assimilate(&fc.belief, y, mm)?;
        steps.push(FilterStep {
            t,
            forecast: fc.belief,
            posterior: post,
            gain,
            warnings: fc.warning.into_iter().collect(),
        });
        belief = post;
        prev = t;
    }
    Ok(FilterOutput {
        kind: FilterKind::Dukf,
        t0: 0.0,
        initial,
        steps,
        provenance: Provenance {
            model_hash: Some(tables.model_hash().to_string()),
            tau_tilde: Some(tau_tilde),
            ..Default::default()
        },
    })
}
