//! Dual birth–death process: derivation from an SDE model and weighted
//! path simulation.

pub mod derive;
pub mod sim;

pub use derive::{
    build_adjoint_operator, derive_reactions, falling_factorial, DualProcess, FeynmanKacPolynomial,
    FkTerm, OperatorTerm, Reaction, ReactionNetwork,
};
pub use sim::{
    build_dual_table, gillespie_path, merge_tables, Caps, DualPathOutcome, DualTable, DualTableSet,
    MomentEstimate, Sign, TableBuild, TableEntry, TableKey, BLOCK_PATHS,
    DEFAULT_TRUNCATION_THRESHOLD, FORECAST_EXPONENTS,
};
