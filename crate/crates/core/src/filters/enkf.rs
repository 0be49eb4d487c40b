//! Ensemble Kalman filter with perturbed observations.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_model_dim, kalman_gain};
use crate::error::{config_err, Error, Result};
use crate::moments::GaussianBelief;
use crate::rng::SimRng;
use crate::sde::{MeasurementModel, PolynomialSdeModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnkfConfig {
    pub ensemble_size: usize,
    pub integrator_dt: f64,
    pub init_mean: [f64; 2],
    pub init_cov: [[f64; 2]; 2],
    pub seed: u64,
}

impl EnkfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size < 2 {
            return Err(config_err("ensemble size must be at least 2"));
        }
        if !(self.integrator_dt > 0.0) {
            return Err(config_err("integrator step must be positive"));
        }
        GaussianBelief::new(self.init_mean, self.init_cov)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub members: Vec<[f64; 2]>,
}

impl Ensemble {
    /// Draw `n` members from N(mean, cov).
    pub fn sample(belief: &GaussianBelief, n: usize, rng: &mut SimRng) -> Self {
        let c = belief.cov;
        let l11 = c[0][0].max(0.0).sqrt();
        let l21 = if l11 > 0.0 { c[1][0] / l11 } else { 0.0 };
        let l22 = (c[1][1] - l21 * l21).max(0.0).sqrt();
        let members = (0..n)
            .map(|_| {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                [
                    belief.mean[0] + l11 * z1,
                    belief.mean[1] + l21 * z1 + l22 * z2,
                ]
            })
            .collect();
        Self { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mean(&self) -> [f64; 2] {
        let n = self.members.len() as f64;
        let s = self
            .members
            .iter()
            .fold([0.0; 2], |acc, m| [acc[0] + m[0], acc[1] + m[1]]);
        [s[0] / n, s[1] / n]
    }

    /// Sample mean and unbiased (n - 1) covariance.
    pub fn belief(&self) -> GaussianBelief {
        let mean = self.mean();
        let mut cov = [[0.0; 2]; 2];
        for m in &self.members {
            let e = [m[0] - mean[0], m[1] - mean[1]];
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += e[i] * e[j];
                }
            }
        }
        let d = (self.members.len() as f64 - 1.0).max(1.0);
        for row in &mut cov {
            for v in row {
                *v /= d;
            }
        }
        GaussianBelief { mean, cov }
    }
}

/// Advance every member independently by Euler–Maruyama over `interval`.
pub fn enkf_forecast(
    ens: &Ensemble,
    model: &PolynomialSdeModel,
    dt: f64,
    interval: f64,
    rng: &mut SimRng,
) -> Result<Ensemble> {
    check_model_dim(model)?;
    if !(dt > 0.0) {
        return Err(config_err("integrator step must be positive"));
    }
    if !(interval >= 0.0) {
        return Err(config_err(format!(
            "forecast interval must be >= 0, got {interval}"
        )));
    }
    let mut scratch = [0.0; 2];
    let mut members = ens.members.clone();
    for (i, m) in members.iter_mut().enumerate() {
        model
            .advance(m, dt, interval, rng, &mut scratch)
            .map_err(|e| Error::BlowUp(format!("ensemble member {i}: {e}")))?;
    }
    Ok(Ensemble { members })
}

/// Quantities computed during one assimilation.
#[derive(Clone, Debug, PartialEq)]
pub struct EnkfAssimilation {
    pub ensemble: Ensemble,
    pub gain: [f64; 2],
    pub forecast: GaussianBelief,
    pub noise_variance: f64,
}

/// Kalman gain from forecast members and their observation-noise draws,
/// with the noise variance estimated from the draws (divisor n - 1).
pub fn ensemble_gain(
    members: &[[f64; 2]],
    noises: &[f64],
    h: [f64; 2],
) -> Result<([f64; 2], GaussianBelief, f64)> {
    let n = members.len();
    if n < 2 || noises.len() != n {
        return Err(config_err(
            "need at least two members with one noise draw each",
        ));
    }
    let forecast = Ensemble {
        members: members.to_vec(),
    }
    .belief();
    let v_bar = noises.iter().sum::<f64>() / n as f64;
    let r_hat = noises
        .iter()
        .map(|v| (v - v_bar) * (v - v_bar))
        .sum::<f64>()
        / (n as f64 - 1.0);
    let gain = kalman_gain(&forecast.cov, h, r_hat)?;
    Ok((gain, forecast, r_hat))
}

/// Perturbed-observation update: x_i + K (y + v_i - H x_i).
pub fn enkf_assimilate(
    ens: &Ensemble,
    y: f64,
    mm: &MeasurementModel,
    rng: &mut SimRng,
) -> Result<EnkfAssimilation> {
    let h = obs_row(mm)?;
    let sd = mm.r.sqrt();
    let noises: Vec<f64> = (0..ens.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect();
    let (gain, forecast, noise_variance) = ensemble_gain(&ens.members, &noises, h)?;
    let members = ens
        .members
        .iter()
        .zip(&noises)
        .map(|(x, v)| {
            let innov = y + v - (h[0] * x[0] + h[1] * x[1]);
            [x[0] + gain[0] * innov, x[1] + gain[1] * innov]
        })
        .collect();
    Ok(EnkfAssimilation {
        ensemble: Ensemble { members },
        gain,
        forecast,
        noise_variance,
    })
}

pub(crate) fn obs_row(mm: &MeasurementModel) -> Result<[f64; 2]> {
    match mm.h.as_slice() {
        [a, b] => Ok([*a, *b]),
        other => Err(Error::DimensionMismatch {
            expected: 2,
            found: other.len(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn members() -> Vec<[f64; 2]> {
        vec![
            [0.1, 0.3],
            [0.5, -0.2],
            [-0.4, 0.9],
            [0.2, 0.2],
            [1.0, -1.1],
        ]
    }

    #[test]
    fn frozen_model_leaves_ensemble_unchanged() {
        let m = PolynomialSdeModel::new("still", vec![vec![], vec![]], vec![0.0, 0.0]).unwrap();
        let ens = Ensemble { members: members() };
        let mut rng = stream_rng(1, 0);
        assert_eq!(enkf_forecast(&ens, &m, 1e-3, 0.2, &mut rng).unwrap(), ens);
        let vdp = PolynomialSdeModel::van_der_pol(1.0, 0.0262, 0.008).unwrap();
        assert_eq!(enkf_forecast(&ens, &vdp, 1e-3, 0.0, &mut rng).unwrap(), ens);
    }

    #[test]
    fn gain_matches_scalar_observation_algebra() {
        let ens = members();
        let noises = [0.1, -0.2, 0.05, 0.3, -0.15];
        let (k, f, r_hat) = ensemble_gain(&ens, &noises, [0.0, 1.0]).unwrap();
        let p = f.cov;
        assert!((k[0] - p[0][1] / (p[1][1] + r_hat)).abs() < 1e-15);
        assert!((k[1] - p[1][1] / (p[1][1] + r_hat)).abs() < 1e-15);
    }

    #[test]
    fn identical_members_give_zero_gain() {
        let ens = Ensemble {
            members: vec![[0.3, 0.4]; 6],
        };
        let mm = MeasurementModel::observe_x2(0.04, 0.2).unwrap();
        let out = enkf_assimilate(&ens, 1.0, &mm, &mut stream_rng(2, 0)).unwrap();
        assert!(out.gain.iter().all(|k| k.abs() < 1e-12));
        let m = out.ensemble.mean();
        assert!((m[0] - 0.3).abs() < 1e-12 && (m[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn huge_noise_suppresses_gain() {
        let ens = Ensemble { members: members() };
        let mm = MeasurementModel::observe_x2(1e12, 0.2).unwrap();
        let out = enkf_assimilate(&ens, 0.0, &mm, &mut stream_rng(2, 0)).unwrap();
        assert!(out.gain[0].abs() < 1e-10 && out.gain[1].abs() < 1e-10);
    }

    #[test]
    fn sampling_matches_moments() {
        let b = GaussianBelief::new([0.1, -0.2], [[0.1, 0.03], [0.03, 0.05]]).unwrap();
        let ens = Ensemble::sample(&b, 200_000, &mut stream_rng(4, 0));
        let s = ens.belief();
        assert!((s.mean[0] - 0.1).abs() < 0.003);
        assert!((s.cov[0][1] - 0.03).abs() < 0.002);
        assert!((s.cov[1][1] - 0.05).abs() < 0.002);
    }

    #[test]
    fn config_validation() {
        let mut c = EnkfConfig {
            ensemble_size: 1,
            integrator_dt: 1e-4,
            init_mean: [0.1, 0.1],
            init_cov: [[0.1, 0.0], [0.0, 0.1]],
            seed: 0,
        };
        assert!(c.validate().is_err());
        c.ensemble_size = 2;
        assert!(c.validate().is_ok());
    }
}
