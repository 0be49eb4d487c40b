//! Filtering of partially observed polynomial SDEs with an ensemble Kalman
//! filter and a duality-based Kalman filter.
//!
//! The duality-based filter replaces ensemble propagation by a pre-computed
//! Monte Carlo simulation of a birth–death process derived mechanically from
//! the SDE's backward operator:
//!
//! 1. [`sde`] holds the model and generates synthetic data.
//! 2. [`dual::derive`] turns the model into a reaction network and a
//!    Feynman–Kac weight polynomial.
//! 3. [`dual::sim`] simulates weighted dual paths into reusable
//!    [`DualTable`]s.
//! 4. [`moments`] evaluates Gaussian raw moments, closing the duality
//!    identity for Gaussian beliefs.
//! 5. [`filters`] runs either filter over a measurement series.
//! 6. [`harness`] wires everything into reproducible commands.

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dual;
pub mod error;
pub mod filters;
pub mod harness;
pub mod io;
pub mod moments;
pub mod rng;
pub mod sde;

pub use dual::{
    build_dual_table, merge_tables, Caps, DualProcess, DualTable, DualTableSet,
    FeynmanKacPolynomial, MomentEstimate, ReactionNetwork, TableBuild,
};
pub use error::{Error, Result};
pub use filters::{run_filter, DukfConfig, EnkfConfig, FilterKind, FilterOutput, FilterSetup};
pub use moments::{raw_moment, GaussianBelief, RawMoments, Reduction};
pub use rng::{derive_seed, stream_rng, SimRng};
pub use sde::{MeasurementModel, MeasurementSeries, Monomial, PolynomialSdeModel, Trajectory};
