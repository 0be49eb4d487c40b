//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use dukf_core::{stream_rng, GaussianBelief, PolynomialSdeModel};

/// Gauss–Hermite nodes and weights for `∫ f(z) φ(z) dz` with φ the
/// standard normal density (probabilists' Hermite, Golub–Welsch free:
/// Newton iteration on the physicists' polynomials, then rescaled).
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(n);
    let pi = std::f64::consts::PI;
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        // initial guesses from Numerical Recipes' gauher
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * out[0].0,
            3 => 1.91 * z - 0.91 * out[2].0,
            _ => 2.0 * z - out[out.len() - 4].0,
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pi.powf(-0.25);
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j as f64 - 1.0) / j as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let w = 2.0 / (pp * pp);
        // physicists' weight for exp(-t^2): convert to the normal density
        out.push((z, w));
        out.push((-z, w));
    }
    out.truncate(n);
    out.into_iter()
        .map(|(t, w)| (t * std::f64::consts::SQRT_2, w / pi.sqrt()))
        .collect()
}

/// `E[x1^a x2^b]` under `belief` by tensor Gauss–Hermite quadrature with
/// `x = mean + L z`, `L` the Cholesky factor.
pub fn quadrature_moment(belief: &GaussianBelief, a: u32, b: u32, nodes: &[(f64, f64)]) -> f64 {
    quadrature(belief, nodes, |x1, x2| {
        x1.powi(a as i32) * x2.powi(b as i32)
    })
}

/// `E[|x1|^a |x2|^b]`, a scale for relative comparisons of signed moments.
pub fn quadrature_abs_moment(belief: &GaussianBelief, a: u32, b: u32, nodes: &[(f64, f64)]) -> f64 {
    quadrature(belief, nodes, |x1, x2| {
        x1.abs().powi(a as i32) * x2.abs().powi(b as i32)
    })
}

fn quadrature(belief: &GaussianBelief, nodes: &[(f64, f64)], f: impl Fn(f64, f64) -> f64) -> f64 {
    let c = belief.cov;
    let l11 = c[0][0].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { c[1][0] / l11 } else { 0.0 };
    let l22 = (c[1][1] - l21 * l21).max(0.0).sqrt();
    let mut sum = 0.0;
    for &(z1, w1) in nodes {
        for &(z2, w2) in nodes {
            let x1 = belief.mean[0] + l11 * z1;
            let x2 = belief.mean[1] + l21 * z1 + l22 * z2;
            sum += w1 * w2 * f(x1, x2);
        }
    }
    sum
}

/// Sample mean and standard error of `x1^a x2^b` at time `tau` from
/// Euler–Maruyama paths started at draws of `init`.
pub struct McMoments {
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

pub fn em_moments(
    model: &PolynomialSdeModel,
    init: &GaussianBelief,
    tau: f64,
    dt: f64,
    paths: usize,
    exponents: &[[u32; 2]],
    seed: u64,
) -> McMoments {
    let mut rng = stream_rng(seed, 0);
    let ens = dukf_core::filters::Ensemble::sample(init, paths, &mut rng);
    let end =
        dukf_core::filters::enkf_forecast(&ens, model, dt, tau, &mut rng).expect("no blow-up");
    let mut values = Vec::new();
    let mut std_errors = Vec::new();
    for e in exponents {
        let samples: Vec<f64> = end
            .members
            .iter()
            .map(|x| x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32))
            .collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
        values.push(mean);
        std_errors.push((var / n).sqrt());
    }
    McMoments { values, std_errors }
}

pub fn vdp() -> PolynomialSdeModel {
    PolynomialSdeModel::van_der_pol(1.0, 0.0262, 0.008).expect("valid model")
}
