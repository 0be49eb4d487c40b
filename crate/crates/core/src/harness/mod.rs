//! Experiment harness: configuration, pipeline commands and comparison.

pub mod commands;
pub mod compare;
pub mod config;

pub use commands::{
    cmd_derive_dual, cmd_gen_dual_tables, cmd_run, cmd_simulate_truth, load_table_set, table_file,
    CommandReport, FORECAST_FILE, MANIFEST_FILE, MEASUREMENTS_FILE, NETWORK_FILE, OUTPUT_FILE,
    TRUTH_FILE,
};
pub use compare::{
    cmd_compare, Metrics, RunInput, METRICS_FILE, PLOT_P12_FILE, PLOT_STATES_FILE, PLOT_TRACE_FILE,
};
pub use config::ExperimentConfig;
