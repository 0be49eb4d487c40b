//! Duality-based Kalman filter: Gaussian forecasts from precomputed dual
//! tables, exact-R Kalman assimilation.

use serde::{Deserialize, Serialize};

use super::enkf::obs_row;
use super::kalman_gain;
use crate::dual::DualTableSet;
use crate::error::{Error, Result};
use crate::moments::{GaussianBelief, RawMoments};
use crate::sde::MeasurementModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DukfConfig {
    pub initial: GaussianBelief,
    /// Covariance eigenvalues are raised to at least this value.
    pub eigen_floor: f64,
    /// A negative eigenvalue larger than this in magnitude is reported.
    pub clamp_warning: f64,
    /// Fail the forecast when any moment's standard error exceeds this.
    pub max_std_error: Option<f64>,
}

impl Default for DukfConfig {
    fn default() -> Self {
        Self {
            initial: GaussianBelief {
                mean: [0.1, 0.1],
                cov: [[0.1, 0.0], [0.0, 0.1]],
            },
            eigen_floor: 1e-10,
            clamp_warning: 1e-3,
            max_std_error: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DukfForecast {
    pub belief: GaussianBelief,
    /// Standard errors of E[x1], E[x2], E[x1^2], E[x2^2], E[x1 x2].
    pub std_errors: [f64; 5],
    pub min_eigenvalue: f64,
    pub warning: Option<String>,
}

/// Propagate a Gaussian belief by `r_ts * tau_tilde` using the five tables.
pub fn dukf_forecast(
    belief: &GaussianBelief,
    tables: &DualTableSet,
    r_ts: f64,
    cfg: &DukfConfig,
) -> Result<DukfForecast> {
    let mut ctx = RawMoments::new(*belief);
    let mut values = [0.0; 5];
    let mut std_errors = [0.0; 5];
    for (k, t) in tables.tables().iter().enumerate() {
        let est = t.gaussian_moment_with(&mut ctx, r_ts)?;
        values[k] = est.value;
        std_errors[k] = est.std_error;
    }
    if let Some(bound) = cfg.max_std_error {
        if let Some(worst) = std_errors.iter().copied().reduce(f64::max) {
            if !(worst <= bound) {
                return Err(Error::EstimateUnusable(format!(
                    "moment standard error {worst:.3e} exceeds bound {bound:.3e}"
                )));
            }
        }
    }
    let [m1, m2, s11, s22, s12] = values;
    let raw = GaussianBelief {
        mean: [m1, m2],
        cov: [
            [s11 - m1 * m1, s12 - m1 * m2],
            [s12 - m1 * m2, s22 - m2 * m2],
        ],
    };
    let (belief, min_eigenvalue) = raw.clamp_psd(cfg.eigen_floor);
    let warning = (min_eigenvalue < cfg.eigen_floor && min_eigenvalue.abs() > cfg.clamp_warning)
        .then(|| {
            format!(
                "forecast covariance eigenvalue {min_eigenvalue:.4e} clamped to {:.1e}",
                cfg.eigen_floor
            )
        });
    Ok(DukfForecast {
        belief,
        std_errors,
        min_eigenvalue,
        warning,
    })
}

/// Kalman update with the exact measurement variance; covariance update is
/// `(I - K H) P`, then symmetrized.
pub fn dukf_assimilate(
    forecast: &GaussianBelief,
    y: f64,
    mm: &MeasurementModel,
) -> Result<(GaussianBelief, [f64; 2])> {
    let h = obs_row(mm)?;
    let p = forecast.cov;
    let k = kalman_gain(&p, h, mm.r)?;
    let m = forecast.mean;
    let innov = y - (h[0] * m[0] + h[1] * m[1]);
    let mean = [m[0] + k[0] * innov, m[1] + k[1] * innov];
    let ikh = [
        [1.0 - k[0] * h[0], -k[0] * h[1]],
        [-k[1] * h[0], 1.0 - k[1] * h[1]],
    ];
    let mut cov = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            cov[i][j] = ikh[i][0] * p[0][j] + ikh[i][1] * p[1][j];
        }
    }
    Ok((GaussianBelief { mean, cov }.symmetrized(), k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm() -> MeasurementModel {
        MeasurementModel::observe_x2(0.04, 0.2).unwrap()
    }

    #[test]
    fn zero_forecast_covariance_keeps_belief() {
        let b = GaussianBelief::point([0.3, -0.1]);
        let (post, k) = dukf_assimilate(&b, 2.0, &mm()).unwrap();
        assert_eq!(k, [0.0, 0.0]);
        assert_eq!(post, b);
    }

    #[test]
    fn scalar_kalman_variance() {
        let p = 0.3;
        let b = GaussianBelief::new([0.0, 0.0], [[p, 0.0], [0.0, p]]).unwrap();
        let (post, _) = dukf_assimilate(&b, 0.5, &mm()).unwrap();
        assert!((post.cov[1][1] - p * 0.04 / (p + 0.04)).abs() < 1e-15);
        assert_eq!(post.cov[0][0], p);
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let b = GaussianBelief::new([0.2, 0.7], [[0.1, 0.02], [0.02, 0.05]]).unwrap();
        let (post, _) = dukf_assimilate(&b, 0.7, &mm()).unwrap();
        assert_eq!(post.mean, b.mean);
        assert!(post.cov[1][1] < b.cov[1][1]);
        assert!(post.cov[0][0] < b.cov[0][0]);
    }
}
