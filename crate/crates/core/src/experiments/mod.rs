//! Monte Carlo orchestration: configuration, deterministic parallel
//! replication, summaries, and result files.

mod config;
mod emit;
mod registry;
mod runner;
mod summary;

pub use config::{ExperimentConfig, ParamValue};
pub use emit::{
    emit_results, format_sig12, summaries_to_csv, summaries_to_json, write_raw_table, OutputFormat,
    CSV_HEADER,
};
pub use registry::{describe, lookup, registered, ExperimentDef, ParamDef};
pub use runner::{parallel_map, run_experiment, ExperimentOutput, RawRecord, MAX_FAILURE_RATE};
pub use summary::{slope_fit, Collector, McSummary};
