//! Experiment configuration: one JSON document describing the whole
//! pipeline. Every field has a default, so `{}` is the reference scenario.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dual::{Caps, TableBuild, DEFAULT_TRUNCATION_THRESHOLD};
use crate::error::{config_err, Result};
use crate::filters::{DukfConfig, EnkfConfig};
use crate::moments::GaussianBelief;
use crate::rng::derive_seed;
use crate::sde::{MeasurementModel, PolynomialSdeModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub epsilon: f64,
    pub q11: f64,
    pub q22: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            q11: 0.0262,
            q22: 0.008,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementConfig {
    /// Observation noise variance.
    pub r: f64,
    /// Time between measurements.
    pub interval: f64,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            r: 0.04,
            interval: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    pub x0: [f64; 2],
    pub dt: f64,
    pub t_end: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            x0: [0.2, 0.1],
            dt: 1e-4,
            t_end: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualConfig {
    /// Dual horizon of the pre-computed tables.
    pub tau_tilde: f64,
    /// Paths per table; the fidelity knob of the whole method.
    pub n_paths: u64,
    pub caps: Caps,
    /// Largest tolerated share of truncated paths.
    pub truncation_threshold: f64,
    /// Worker threads for table generation; `null` uses every core.
    pub workers: Option<usize>,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            tau_tilde: 0.2,
            n_paths: 10_000_000,
            caps: Caps::default(),
            truncation_threshold: DEFAULT_TRUNCATION_THRESHOLD,
            workers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnkfSettings {
    pub ensemble_size: usize,
    pub integrator_dt: f64,
}

impl Default for EnkfSettings {
    fn default() -> Self {
        Self {
            ensemble_size: 1000,
            integrator_dt: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DukfSettings {
    pub eigen_floor: f64,
    pub clamp_warning: f64,
    pub max_std_error: Option<f64>,
}

impl Default for DukfSettings {
    fn default() -> Self {
        let d = DukfConfig::default();
        Self {
            eigen_floor: d.eigen_floor,
            clamp_warning: d.clamp_warning,
            max_std_error: d.max_std_error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stochastic stage derives its own seed from it.
    pub seed: u64,
    pub model: ModelConfig,
    pub measurement: MeasurementConfig,
    pub truth: TruthConfig,
    pub dual: DualConfig,
    /// Initial belief shared by both filters.
    pub initial: GaussianBelief,
    pub enkf: EnkfSettings,
    pub dukf: DukfSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelConfig::default(),
            measurement: MeasurementConfig::default(),
            truth: TruthConfig::default(),
            dual: DualConfig::default(),
            initial: DukfConfig::default().initial,
            enkf: EnkfSettings::default(),
            dukf: DukfSettings::default(),
        }
    }
}

/// Labels used to derive per-stage seeds from the master seed.
pub const SEED_LABELS: [&str; 8] = [
    "truth", "observe", "dual/c1", "dual/c2", "dual/c3", "dual/c4", "dual/c5", "enkf",
];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    /// Parse and validate; absent fields take their defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        self.model()?;
        self.measurement_model()?;
        GaussianBelief::new(self.initial.mean, self.initial.cov)?;
        let t = &self.truth;
        if !(t.dt > 0.0) || !(t.t_end >= 0.0) || t.x0.iter().any(|v| !v.is_finite()) {
            return Err(config_err(
                "truth settings need dt > 0, t_end >= 0 and a finite x0",
            ));
        }
        let d = &self.dual;
        if !(d.tau_tilde > 0.0) || d.n_paths == 0 || !(d.truncation_threshold >= 0.0) {
            return Err(config_err(
                "dual settings need tau_tilde > 0, n_paths >= 1, threshold >= 0",
            ));
        }
        if d.workers == Some(0) {
            return Err(config_err("workers must be at least 1"));
        }
        if !(self.measurement.interval <= d.tau_tilde * (1.0 + 1e-9)) {
            return Err(config_err(
                "measurement interval must not exceed the dual horizon tau_tilde",
            ));
        }
        self.enkf_config().validate()?;
        if !(self.dukf.eigen_floor >= 0.0) || !(self.dukf.clamp_warning >= 0.0) {
            return Err(config_err(
                "eigen_floor and clamp_warning must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<PolynomialSdeModel> {
        PolynomialSdeModel::van_der_pol(self.model.epsilon, self.model.q11, self.model.q22)
    }

    pub fn measurement_model(&self) -> Result<MeasurementModel> {
        MeasurementModel::observe_x2(self.measurement.r, self.measurement.interval)
    }

    pub fn seed_for(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }

    /// Build settings for table `k` (0-based) of the forecast set.
    pub fn table_build(&self, k: usize) -> TableBuild {
        TableBuild {
            tau_tilde: self.dual.tau_tilde,
            n_paths: self.dual.n_paths,
            caps: self.dual.caps,
            seed: self.seed_for(&format!("dual/c{}", k + 1)),
            workers: self.dual.workers,
        }
    }

    pub fn enkf_config(&self) -> EnkfConfig {
        EnkfConfig {
            ensemble_size: self.enkf.ensemble_size,
            integrator_dt: self.enkf.integrator_dt,
            init_mean: self.initial.mean,
            init_cov: self.initial.cov,
            seed: self.seed_for("enkf"),
        }
    }

    pub fn dukf_config(&self) -> DukfConfig {
        DukfConfig {
            initial: self.initial,
            eigen_floor: self.dukf.eigen_floor,
            clamp_warning: self.dukf.clamp_warning,
            max_std_error: self.dukf.max_std_error,
        }
    }
}
