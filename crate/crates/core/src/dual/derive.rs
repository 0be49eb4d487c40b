//! Compilation of a polynomial SDE into its dual birth–death process.
//!
//! The backward generator `sum_i f_i(x) d/dx_i + sum_i (Q_ii / 2) d^2/dx_i^2`
//! is rewritten in creation/annihilation operators (`x_i -> a+_i`,
//! `d/dx_i -> a_i`) and multiplied by the time-scaling creation operator
//! `a+_0`. Because every drift monomial is a pure function of `x` followed
//! by a single derivative, each term is already normal-ordered.
//!
//! Each normal-ordered term `c (a+)^m a^q` then becomes a reaction with
//! propensity `|c| prod_i n_i^(q_i falling)`, net change `m - q`, and a sign
//! toggle when `c < 0`. The conservation terms subtracted to make the
//! generator stochastic are collected in the Feynman–Kac polynomial, which
//! therefore equals the total propensity everywhere.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::sde::PolynomialSdeModel;

/// `coefficient * prod_i (a+_i)^creation[i] * prod_i (a_i)^annihilation[i]`,
/// creations to the left. Index 0 is the time-scaling species.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTerm {
    pub coefficient: f64,
    pub creation: Vec<u32>,
    pub annihilation: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub rate_coefficient: f64,
    pub ff_orders: Vec<u32>,
    pub delta: Vec<i64>,
    pub sign_toggle: bool,
}

impl Reaction {
    #[inline]
    pub fn propensity(&self, n: &[u32]) -> f64 {
        ff_product(self.rate_coefficient, &self.ff_orders, n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReactionNetwork {
    pub species_count: usize,
    pub reactions: Vec<Reaction>,
}

impl ReactionNetwork {
    pub fn total_propensity(&self, n: &[u32]) -> f64 {
        self.reactions.iter().map(|r| r.propensity(n)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkTerm {
    pub coefficient: f64,
    pub ff_orders: Vec<u32>,
}

/// V(n) = sum_k c_k prod_i n_i^(q_ki falling)
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeynmanKacPolynomial {
    pub terms: Vec<FkTerm>,
}

impl FeynmanKacPolynomial {
    #[inline]
    pub fn eval(&self, n: &[u32]) -> f64 {
        self.terms
            .iter()
            .map(|t| ff_product(t.coefficient, &t.ff_orders, n))
            .sum()
    }
}

/// n (n-1) ... (n-q+1); zero when n < q.
#[inline]
pub fn falling_factorial(n: u32, q: u32) -> f64 {
    if n < q {
        return 0.0;
    }
    (0..q).fold(1.0, |acc, k| acc * f64::from(n - k))
}

#[inline]
fn ff_product(coefficient: f64, orders: &[u32], n: &[u32]) -> f64 {
    let mut acc = coefficient;
    for (&q, &ni) in orders.iter().zip(n) {
        if q == 0 {
            continue;
        }
        if ni < q {
            return 0.0;
        }
        acc *= falling_factorial(ni, q);
    }
    acc
}

/// Reaction network plus its Feynman–Kac weight rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualProcess {
    pub species_count: usize,
    pub reactions: Vec<Reaction>,
    pub feynman_kac: FeynmanKacPolynomial,
}

impl DualProcess {
    pub fn from_model(model: &PolynomialSdeModel) -> Result<Self> {
        let terms = build_adjoint_operator(model);
        let (network, fk) = derive_reactions(&terms, model.dim() + 1)?;
        Ok(Self::from_parts(network, fk))
    }

    pub fn from_parts(network: ReactionNetwork, feynman_kac: FeynmanKacPolynomial) -> Self {
        Self {
            species_count: network.species_count,
            reactions: network.reactions,
            feynman_kac,
        }
    }

    pub fn network(&self) -> ReactionNetwork {
        ReactionNetwork {
            species_count: self.species_count,
            reactions: self.reactions.clone(),
        }
    }

    pub fn total_propensity(&self, n: &[u32]) -> f64 {
        self.reactions.iter().map(|r| r.propensity(n)).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dual process serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    /// SHA-256 of the compact JSON encoding; identifies the model a table
    /// was generated for.
    pub fn model_hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("dual process serializes")
                .as_bytes(),
        )
    }

    fn validate(&self) -> Result<()> {
        let s = self.species_count;
        for r in &self.reactions {
            if r.ff_orders.len() != s || r.delta.len() != s {
                return Err(Error::MalformedOperator(
                    "reaction vector length differs from species count".into(),
                ));
            }
            if !(r.rate_coefficient > 0.0) {
                return Err(Error::MalformedOperator(
                    "rate coefficients must be positive".into(),
                ));
            }
        }
        if self
            .feynman_kac
            .terms
            .iter()
            .any(|t| t.ff_orders.len() != s)
        {
            return Err(Error::MalformedOperator(
                "Feynman-Kac term length differs from species count".into(),
            ));
        }
        Ok(())
    }
}

/// Terms of `a+_0 L` for the model's backward generator, like terms merged
/// and zero coefficients dropped.
pub fn build_adjoint_operator(model: &PolynomialSdeModel) -> Vec<OperatorTerm> {
    let dim = model.dim();
    let species = dim + 1;
    let mut merged: BTreeMap<(Vec<u32>, Vec<u32>), Vec<f64>> = BTreeMap::new();
    for (i, monomials) in model.drift().iter().enumerate() {
        for m in monomials {
            let mut creation = vec![1u32];
            creation.extend(&m.exponents);
            let mut annihilation = vec![0u32; species];
            annihilation[i + 1] = 1;
            merged
                .entry((creation, annihilation))
                .or_default()
                .push(m.coefficient);
        }
    }
    for (i, &q) in model.diffusion_diag().iter().enumerate() {
        let mut creation = vec![0u32; species];
        creation[0] = 1;
        let mut annihilation = vec![0u32; species];
        annihilation[i + 1] = 2;
        merged
            .entry((creation, annihilation))
            .or_default()
            .push(q / 2.0);
    }
    collect_terms(merged)
}

fn collect_terms(merged: BTreeMap<(Vec<u32>, Vec<u32>), Vec<f64>>) -> Vec<OperatorTerm> {
    merged
        .into_iter()
        .filter_map(|((creation, annihilation), mut coefs)| {
            coefs.sort_by(f64::total_cmp);
            let coefficient: f64 = coefs.iter().sum();
            (coefficient != 0.0).then_some(OperatorTerm {
                coefficient,
                creation,
                annihilation,
            })
        })
        .collect()
}

/// Turn normal-ordered operator terms into a reaction network and its
/// Feynman–Kac polynomial. Output is canonically ordered (reactions by
/// `delta` then `ff_orders`; polynomial terms by `ff_orders`).
pub fn derive_reactions(
    terms: &[OperatorTerm],
    species_count: usize,
) -> Result<(ReactionNetwork, FeynmanKacPolynomial)> {
    let mut merged: BTreeMap<(Vec<u32>, Vec<u32>), Vec<f64>> = BTreeMap::new();
    for t in terms {
        if t.creation.len() != species_count || t.annihilation.len() != species_count {
            return Err(Error::MalformedOperator(format!(
                "term vectors must have length {species_count}"
            )));
        }
        if t.annihilation[0] != 0 {
            return Err(Error::MalformedOperator(
                "time-scaling species cannot be annihilated".into(),
            ));
        }
        if !t.coefficient.is_finite() {
            return Err(Error::MalformedOperator("non-finite coefficient".into()));
        }
        merged
            .entry((t.creation.clone(), t.annihilation.clone()))
            .or_default()
            .push(t.coefficient);
    }

    let mut reactions = Vec::new();
    let mut fk: BTreeMap<Vec<u32>, Vec<f64>> = BTreeMap::new();
    for term in collect_terms(merged) {
        let rate = term.coefficient.abs();
        let delta = term
            .creation
            .iter()
            .zip(&term.annihilation)
            .map(|(&c, &a)| i64::from(c) - i64::from(a))
            .collect();
        fk.entry(term.annihilation.clone()).or_default().push(rate);
        reactions.push(Reaction {
            rate_coefficient: rate,
            ff_orders: term.annihilation,
            delta,
            sign_toggle: term.coefficient < 0.0,
        });
    }
    reactions.sort_by(|a, b| {
        (&a.delta, &a.ff_orders, a.sign_toggle)
            .cmp(&(&b.delta, &b.ff_orders, b.sign_toggle))
            .then(a.rate_coefficient.total_cmp(&b.rate_coefficient))
    });
    let terms = fk
        .into_iter()
        .map(|(ff_orders, mut coefs)| {
            coefs.sort_by(f64::total_cmp);
            FkTerm {
                coefficient: coefs.iter().sum(),
                ff_orders,
            }
        })
        .collect();
    Ok((
        ReactionNetwork {
            species_count,
            reactions,
        },
        FeynmanKacPolynomial { terms },
    ))
}
