//! Dual-process derivation: golden Van der Pol network and the generator
//! identity for random polynomial models.

use dukf_core::dual::{falling_factorial, DualProcess};
use dukf_core::{Monomial, PolynomialSdeModel};
use proptest::prelude::*;

mod common;

#[test]
fn van_der_pol_network_is_golden() {
    let process = DualProcess::from_model(&common::vdp()).unwrap();
    // (rate, ff_orders, delta, toggle) in canonical order
    let expected: [(f64, [u32; 3], [i64; 3], bool); 6] = [
        (0.0131, [0, 2, 0], [1, -2, 0], false),
        (1.0, [0, 1, 0], [1, -1, 1], false),
        (0.004, [0, 0, 2], [1, 0, -2], false),
        (1.0, [0, 0, 1], [1, 0, 0], false),
        (1.0, [0, 0, 1], [1, 1, -1], true),
        (1.0, [0, 0, 1], [1, 2, 0], true),
    ];
    assert_eq!(process.species_count, 3);
    assert_eq!(process.reactions.len(), 6);
    for (r, (rate, ff, delta, toggle)) in process.reactions.iter().zip(expected) {
        assert_eq!(r.rate_coefficient, rate);
        assert_eq!(r.ff_orders, ff);
        assert_eq!(r.delta, delta);
        assert_eq!(r.sign_toggle, toggle);
    }
    // V(n) = n1 + (2 eps + 1) n2 + (Q11/2) n1(n1-1) + (Q22/2) n2(n2-1)
    for n1 in 0..8u32 {
        for n2 in 0..8u32 {
            let n = [3, n1, n2];
            let (a, b) = (f64::from(n1), f64::from(n2));
            let v = a + 3.0 * b + 0.0131 * a * (a - 1.0) + 0.004 * b * (b - 1.0);
            assert!((process.feynman_kac.eval(&n) - v).abs() <= 1e-13 * v.max(1.0));
        }
    }
}

#[test]
fn epsilon_scales_only_its_reactions() {
    let p = DualProcess::from_model(&PolynomialSdeModel::van_der_pol(2.5, 0.0262, 0.008).unwrap())
        .unwrap();
    let rate = |delta: [i64; 3]| {
        p.reactions
            .iter()
            .find(|r| r.delta == delta)
            .unwrap()
            .rate_coefficient
    };
    assert_eq!(rate([1, 0, 0]), 2.5);
    assert_eq!(rate([1, 2, 0]), 2.5);
    assert_eq!(rate([1, 1, -1]), 1.0);
}

/// Backward generator applied to `x^n`, evaluated directly from the model.
fn generator_on_monomial(model: &PolynomialSdeModel, n: &[u32], x: &[f64]) -> f64 {
    let drift = model.drift_eval(x).unwrap();
    let pow = |e: &[i64]| -> f64 { e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product() };
    let mut total = 0.0;
    for i in 0..n.len() {
        let mut e: Vec<i64> = n.iter().map(|&k| i64::from(k)).collect();
        if n[i] >= 1 {
            e[i] -= 1;
            total += drift[i] * f64::from(n[i]) * pow(&e);
        }
        if n[i] >= 2 {
            e[i] -= 1;
            total +=
                0.5 * model.diffusion_diag()[i] * f64::from(n[i]) * f64::from(n[i] - 1) * pow(&e);
        }
    }
    total
}

/// The same quantity assembled from the derived reactions:
/// `sum_r s_r c_r ff(n, q_r) x^(n + delta_r)` over the non-time species.
fn generator_from_reactions(process: &DualProcess, n: &[u32], x: &[f64]) -> f64 {
    let mut full = vec![0u32];
    full.extend_from_slice(n);
    process
        .reactions
        .iter()
        .map(|r| {
            let sign = if r.sign_toggle { -1.0 } else { 1.0 };
            let ff = r.propensity(&full);
            if ff == 0.0 {
                return 0.0;
            }
            let mono: f64 = (0..n.len())
                .map(|i| x[i].powi((i64::from(n[i]) + r.delta[i + 1]) as i32))
                .product();
            sign * ff * mono
        })
        .sum()
}

fn random_model() -> impl Strategy<Value = PolynomialSdeModel> {
    let monomial =
        (-2.0f64..2.0, 0u32..4, 0u32..4).prop_map(|(c, a, b)| Monomial::new(c, vec![a, b]));
    (
        prop::collection::vec(monomial.clone(), 0..5),
        prop::collection::vec(monomial, 0..5),
        0.0f64..0.5,
        0.0f64..0.5,
    )
        .prop_map(|(d1, d2, q1, q2)| {
            PolynomialSdeModel::new("random", vec![d1, d2], vec![q1, q2]).unwrap()
        })
}

proptest! {
    #[test]
    fn reactions_reproduce_the_generator(
        model in random_model(),
        n1 in 0u32..5,
        n2 in 0u32..5,
        x1 in -1.5f64..1.5,
        x2 in -1.5f64..1.5,
    ) {
        let process = DualProcess::from_model(&model).unwrap();
        let direct = generator_on_monomial(&model, &[n1, n2], &[x1, x2]);
        let dual = generator_from_reactions(&process, &[n1, n2], &[x1, x2]);
        let scale = 1.0 + direct.abs();
        prop_assert!((direct - dual).abs() <= 1e-10 * scale, "direct {} dual {}", direct, dual);
    }

    #[test]
    fn weight_rate_equals_total_propensity(
        model in random_model(),
        n in prop::collection::vec(0u32..12, 3),
    ) {
        let process = DualProcess::from_model(&model).unwrap();
        let v = process.feynman_kac.eval(&n);
        let a = process.total_propensity(&n);
        prop_assert!((v - a).abs() <= 1e-12 * a.abs().max(1e-300));
    }

    #[test]
    fn every_reaction_creates_one_time_unit(model in random_model()) {
        let process = DualProcess::from_model(&model).unwrap();
        for r in &process.reactions {
            prop_assert_eq!(r.delta[0], 1);
            prop_assert_eq!(r.ff_orders[0], 0);
            prop_assert!(r.rate_coefficient > 0.0);
        }
    }

    #[test]
    fn falling_factorial_matches_product(n in 0u32..30, q in 0u32..6) {
        let direct: f64 = (0..q).map(|k| f64::from(n) - f64::from(k)).map(|v| v.max(0.0)).product();
        let expected = if q > n { 0.0 } else { direct };
        prop_assert_eq!(falling_factorial(n, q), expected);
    }
}

#[test]
fn network_json_round_trips_with_stable_hash() {
    let process = DualProcess::from_model(&common::vdp()).unwrap();
    let back = DualProcess::from_json(&process.to_json()).unwrap();
    assert_eq!(back, process);
    assert_eq!(back.model_hash(), process.model_hash());
    let other =
        DualProcess::from_model(&PolynomialSdeModel::van_der_pol(1.0, 0.0262, 0.009).unwrap())
            .unwrap();
    assert_ne!(other.model_hash(), process.model_hash());
}
