//! Polynomial-drift SDEs with constant diagonal diffusion: model
//! representation, Euler–Maruyama integration, and synthetic measurements.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::io::{fmt_f64, parse_f64};
use crate::rng::SimRng;

/// Relative tolerance used when aligning times to an integration grid.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// `coefficient * prod_j x_j^exponents[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coefficient: f64,
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(coefficient: f64, exponents: Vec<u32>) -> Self {
        Self {
            coefficient,
            exponents,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .fold(self.coefficient, |acc, (&e, &xi)| acc * powu(xi, e))
    }
}

#[inline]
pub(crate) fn powu(x: f64, e: u32) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => x.powi(e as i32),
    }
}

/// dx_i = sum_m c_m x^{e_m} dt + sqrt(Q_ii) dW_i
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialSdeModel {
    name: String,
    dim: usize,
    drift: Vec<Vec<Monomial>>,
    diffusion_diag: Vec<f64>,
}

impl PolynomialSdeModel {
    pub fn new(
        name: impl Into<String>,
        drift: Vec<Vec<Monomial>>,
        diffusion_diag: Vec<f64>,
    ) -> Result<Self> {
        let dim = drift.len();
        if dim == 0 {
            return Err(config_err("model must have at least one state variable"));
        }
        if diffusion_diag.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: diffusion_diag.len(),
            });
        }
        for m in drift.iter().flatten() {
            if m.exponents.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: m.exponents.len(),
                });
            }
            if !m.coefficient.is_finite() {
                return Err(config_err("drift coefficients must be finite"));
            }
        }
        if diffusion_diag.iter().any(|q| !q.is_finite() || *q < 0.0) {
            return Err(config_err(
                "diffusion entries must be finite and non-negative",
            ));
        }
        Ok(Self {
            name: name.into(),
            dim,
            drift,
            diffusion_diag,
        })
    }

    /// Noisy Van der Pol oscillator:
    /// dx1 = x2 dt + dW1, dx2 = (eps (1 - x1^2) x2 - x1) dt + dW2.
    pub fn van_der_pol(epsilon: f64, q11: f64, q22: f64) -> Result<Self> {
        Self::new(
            "van-der-pol",
            vec![
                vec![Monomial::new(1.0, vec![0, 1])],
                vec![
                    Monomial::new(epsilon, vec![0, 1]),
                    Monomial::new(-epsilon, vec![2, 1]),
                    Monomial::new(-1.0, vec![1, 0]),
                ],
            ],
            vec![q11, q22],
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drift(&self) -> &[Vec<Monomial>] {
        &self.drift
    }

    pub fn diffusion_diag(&self) -> &[f64] {
        &self.diffusion_diag
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: len,
            });
        }
        Ok(())
    }

    pub fn drift_eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`drift_eval`](Self::drift_eval) writing into `out`.
    pub(crate) fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, monomials) in out.iter_mut().zip(&self.drift) {
            *o = monomials.iter().map(|m| m.eval(x)).sum();
        }
    }

    pub fn euler_maruyama_step(&self, x: &[f64], dt: f64, rng: &mut SimRng) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        if !(dt > 0.0) {
            return Err(config_err(format!("time step must be positive, got {dt}")));
        }
        let mut state = x.to_vec();
        let mut scratch = vec![0.0; self.dim];
        self.step_in_place(&mut state, dt, rng, &mut scratch)?;
        Ok(state)
    }

    /// One Euler–Maruyama step applied to `x` in place. `scratch` must have
    /// length `dim`.
    pub(crate) fn step_in_place(
        &self,
        x: &mut [f64],
        dt: f64,
        rng: &mut SimRng,
        scratch: &mut [f64],
    ) -> Result<()> {
        self.drift_into(x, scratch);
        for i in 0..self.dim {
            let q = self.diffusion_diag[i];
            let noise = if q > 0.0 {
                let xi: f64 = StandardNormal.sample(rng);
                (q * dt).sqrt() * xi
            } else {
                0.0
            };
            x[i] += scratch[i] * dt + noise;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp(format!("non-finite state {x:?}")));
        }
        Ok(())
    }

    /// Integrate from `x` over `duration` using steps of `dt`; a final
    /// partial step covers any remainder.
    pub(crate) fn advance(
        &self,
        x: &mut [f64],
        dt: f64,
        duration: f64,
        rng: &mut SimRng,
        scratch: &mut [f64],
    ) -> Result<()> {
        if duration <= 0.0 {
            return Ok(());
        }
        let full = (duration / dt + GRID_TOLERANCE).floor() as u64;
        for _ in 0..full {
            self.step_in_place(x, dt, rng, scratch)?;
        }
        let rest = duration - full as f64 * dt;
        if rest > GRID_TOLERANCE * dt {
            self.step_in_place(x, rest, rng, scratch)?;
        }
        Ok(())
    }

    pub fn simulate_truth(
        &self,
        x0: &[f64],
        dt: f64,
        t_end: f64,
        rng: &mut SimRng,
    ) -> Result<Trajectory> {
        self.check_dim(x0.len())?;
        if !(dt > 0.0) {
            return Err(config_err(format!("time step must be positive, got {dt}")));
        }
        if !(t_end >= 0.0) {
            return Err(config_err(format!(
                "t_end must be non-negative, got {t_end}"
            )));
        }
        let steps = (t_end / dt + GRID_TOLERANCE).floor() as usize;
        let mut states = Vec::with_capacity(steps + 1);
        let mut x = x0.to_vec();
        let mut scratch = vec![0.0; self.dim];
        states.push(x.clone());
        for k in 0..steps {
            self.step_in_place(&mut x, dt, rng, &mut scratch)
                .map_err(|e| Error::BlowUp(format!("at step {}: {e}", k + 1)))?;
            states.push(x.clone());
        }
        Ok(Trajectory {
            dt,
            t0: 0.0,
            states,
        })
    }
}

/// Scalar observation y = H x + v, v ~ N(0, R), every `interval` time units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    pub h: Vec<f64>,
    pub r: f64,
    pub interval: f64,
}

impl MeasurementModel {
    /// `r = 0` is accepted for noiseless synthetic data.
    pub fn new(h: Vec<f64>, r: f64, interval: f64) -> Result<Self> {
        if h.is_empty() || h.iter().any(|v| !v.is_finite()) {
            return Err(config_err("observation row must be non-empty and finite"));
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(config_err(format!(
                "measurement variance must be >= 0, got {r}"
            )));
        }
        if !(interval > 0.0) {
            return Err(config_err(format!(
                "measurement interval must be > 0, got {interval}"
            )));
        }
        Ok(Self { h, r, interval })
    }

    /// Observe the second state variable (H = [0, 1]).
    pub fn observe_x2(r: f64, interval: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], r, interval)
    }

    pub fn project(&self, x: &[f64]) -> f64 {
        self.h.iter().zip(x).map(|(h, x)| h * x).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub t0: f64,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.states.len().saturating_sub(1))
    }

    pub fn observe(&self, mm: &MeasurementModel, rng: &mut SimRng) -> Result<MeasurementSeries> {
        let dim = self.states.first().map_or(0, Vec::len);
        if mm.h.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: mm.h.len(),
            });
        }
        let ratio = mm.interval / self.dt;
        let stride = ratio.round();
        if stride < 1.0 || (ratio - stride).abs() > GRID_TOLERANCE * stride.max(1.0) {
            return Err(config_err(format!(
                "measurement interval {} is not an integer multiple of dt {}",
                mm.interval, self.dt
            )));
        }
        let stride = stride as usize;
        let sd = mm.r.sqrt();
        let mut series = MeasurementSeries::default();
        let mut idx = stride;
        while idx < self.states.len() {
            let noise = if sd > 0.0 {
                let xi: f64 = StandardNormal.sample(rng);
                sd * xi
            } else {
                0.0
            };
            series.times.push(self.time(idx));
            series.values.push(mm.project(&self.states[idx]) + noise);
            idx += stride;
        }
        Ok(series)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let dim = self.states.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=dim).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for (i, s) in self.states.iter().enumerate() {
            let mut row = vec![fmt_f64(self.time(i))];
            row.extend(s.iter().map(|&v| fmt_f64(v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `t,x1,...` file; the grid step is inferred from the first two rows.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals = rec.iter().map(parse_f64).collect::<Result<Vec<_>>>()?;
            let (t, x) = vals
                .split_first()
                .ok_or_else(|| config_err("empty trajectory row"))?;
            rows.push((*t, x.to_vec()));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let first = rows
            .first()
            .ok_or_else(|| config_err("trajectory file has no rows"))?;
        let t0 = first.0;
        let dt = if rows.len() > 1 { rows[1].0 - t0 } else { 1.0 };
        Ok(Self {
            dt,
            t0,
            states: rows.into_iter().map(|(_, x)| x).collect(),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeasurementSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl MeasurementSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let s = Self { times, values };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(config_err("measurement times and values differ in length"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config_err("measurement times must be strictly increasing"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "y"])?;
        for (t, y) in self.times.iter().zip(&self.values) {
            w.write_record([fmt_f64(*t), fmt_f64(*y)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(config_err("measurement rows must have two columns"));
            }
            times.push(parse_f64(&rec[0])?);
            values.push(parse_f64(&rec[1])?);
        }
        Self::new(times, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn vdp() -> PolynomialSdeModel {
        PolynomialSdeModel::van_der_pol(1.0, 0.0262, 0.008).unwrap()
    }

    #[test]
    fn drift_at_origin_vanishes() {
        assert_eq!(vdp().drift_eval(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn drift_hand_values() {
        let d = vdp().drift_eval(&[0.2, 0.1]).unwrap();
        assert!((d[0] - 0.1).abs() < 1e-15);
        assert!((d[1] - (-0.104)).abs() < 1e-15);
        let d = vdp().drift_eval(&[1.0, 5.0]).unwrap();
        assert_eq!(d, vec![5.0, -1.0]);
    }

    #[test]
    fn drift_rejects_wrong_dimension() {
        assert!(matches!(
            vdp().drift_eval(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn model_validation() {
        assert!(PolynomialSdeModel::new(
            "bad",
            vec![vec![Monomial::new(1.0, vec![1, 0])]],
            vec![0.0]
        )
        .is_err());
        assert!(PolynomialSdeModel::new("neg", vec![vec![]], vec![-1.0]).is_err());
        let m = vdp();
        assert_eq!(m.drift()[1][1], Monomial::new(-1.0, vec![2, 1]));
    }

    #[test]
    fn noiseless_step_is_deterministic_euler() {
        let m = PolynomialSdeModel::van_der_pol(1.0, 0.0, 0.0).unwrap();
        let mut rng = stream_rng(1, 0);
        let x = m.euler_maruyama_step(&[0.2, 0.1], 1e-4, &mut rng).unwrap();
        assert!((x[0] - 0.20001).abs() < 1e-15);
        assert!((x[1] - 0.0999896).abs() < 1e-15);
        let x = m.euler_maruyama_step(&[0.0, 0.0], 0.5, &mut rng).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn step_detects_blow_up() {
        let m =
            PolynomialSdeModel::new("cubic", vec![vec![Monomial::new(1.0, vec![3])]], vec![0.0])
                .unwrap();
        let mut rng = stream_rng(1, 0);
        assert!(matches!(
            m.euler_maruyama_step(&[1e200], 1.0, &mut rng),
            Err(Error::BlowUp(_))
        ));
        assert!(m.euler_maruyama_step(&[1.0], 0.0, &mut rng).is_err());
    }

    #[test]
    fn zero_horizon_trajectory() {
        let mut rng = stream_rng(1, 0);
        let tr = vdp()
            .simulate_truth(&[0.2, 0.1], 1e-4, 0.0, &mut rng)
            .unwrap();
        assert_eq!(tr.states, vec![vec![0.2, 0.1]]);
    }

    #[test]
    fn trajectory_length_and_determinism_without_noise() {
        let m = PolynomialSdeModel::van_der_pol(1.0, 0.0, 0.0).unwrap();
        let a = m
            .simulate_truth(&[0.2, 0.1], 1e-3, 1.0, &mut stream_rng(1, 0))
            .unwrap();
        let b = m
            .simulate_truth(&[0.2, 0.1], 1e-3, 1.0, &mut stream_rng(99, 3))
            .unwrap();
        assert_eq!(a.len(), 1001);
        assert_eq!(a, b);
    }

    #[test]
    fn harmonic_oscillator_energy() {
        // eps = 0, Q = 0: x1^2 + x2^2 grows by (1 + dt^2) per explicit Euler step.
        let m = PolynomialSdeModel::van_der_pol(0.0, 0.0, 0.0).unwrap();
        let dt = 1e-4;
        let period = 2.0 * std::f64::consts::PI;
        let tr = m
            .simulate_truth(&[1.0, 0.0], dt, period, &mut stream_rng(0, 0))
            .unwrap();
        let last = tr.states.last().unwrap();
        let energy = last[0] * last[0] + last[1] * last[1];
        let steps = tr.len() as f64 - 1.0;
        let expected = (1.0 + dt * dt).powf(steps);
        assert!((energy - expected).abs() < 1e-9);
        assert!((energy - 1.0).abs() < 10.0 * dt);
        // closed-form linear oscillator: back to (1, 0) after one period
        assert!((last[0] - 1.0).abs() < 1e-3 && last[1].abs() < 1e-3);
    }

    #[test]
    fn noiseless_observation_is_projection() {
        let m = vdp();
        let tr = m
            .simulate_truth(&[0.2, 0.1], 1e-3, 1.0, &mut stream_rng(3, 0))
            .unwrap();
        let mm = MeasurementModel::observe_x2(0.0, 0.2).unwrap();
        let ys = tr.observe(&mm, &mut stream_rng(3, 1)).unwrap();
        assert_eq!(ys.len(), 5);
        for (k, (t, y)) in ys.times.iter().zip(&ys.values).enumerate() {
            let idx = (k + 1) * 200;
            assert_eq!(*y, tr.states[idx][1]);
            assert!((t - 0.2 * (k + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn observation_grid_mismatch_is_rejected() {
        let tr = vdp()
            .simulate_truth(&[0.2, 0.1], 0.03, 1.0, &mut stream_rng(3, 0))
            .unwrap();
        let mm = MeasurementModel::observe_x2(0.04, 0.2).unwrap();
        assert!(matches!(
            tr.observe(&mm, &mut stream_rng(0, 0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn measurement_series_validation() {
        assert!(MeasurementSeries::new(vec![0.1, 0.1], vec![1.0, 2.0]).is_err());
        assert!(MeasurementSeries::new(vec![0.1], vec![1.0, 2.0]).is_err());
        assert!(MeasurementSeries::new(vec![0.1, 0.2], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let tr = vdp()
            .simulate_truth(&[0.2, 0.1], 1e-2, 0.5, &mut stream_rng(5, 0))
            .unwrap();
        let p = dir.path().join("truth.csv");
        tr.write_csv(&p).unwrap();
        let back = Trajectory::read_csv(&p).unwrap();
        assert_eq!(back.states, tr.states);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,x1,x2\n"));

        let ys = tr
            .observe(
                &MeasurementModel::observe_x2(0.04, 0.1).unwrap(),
                &mut stream_rng(5, 1),
            )
            .unwrap();
        let p = dir.path().join("y.csv");
        ys.write_csv(&p).unwrap();
        assert_eq!(MeasurementSeries::read_csv(&p).unwrap(), ys);
    }
}
