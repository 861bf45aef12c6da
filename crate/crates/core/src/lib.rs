//! priorlab: frequentist and Bayesian estimators side by side, with the
//! Monte Carlo machinery to compare them.
//!
//! Modules follow the models they implement:
//!
//! - [`stochastics`]: deterministic streams and exact samplers
//! - [`sequence_models`]: white-noise functional, sparse normal means
//! - [`density_functional`]: estimating ∫f² from histograms
//! - [`missing_data`]: Bernoulli panels with known sampling weights
//! - [`mixed_model`]: paired-hospital Neyman–Scott model
//! - [`partial_linear`]: exponential weighting over subsets
//! - [`foundations`]: persistence and Bayes-bias checkers
//! - [`experiments`]: configuration, replication, result emission

pub mod density_functional;
pub mod error;
pub mod experiments;
pub mod foundations;
pub mod missing_data;
pub mod mixed_model;
pub mod numeric;
pub mod optimize;
pub mod partial_linear;
pub mod sequence_models;
pub mod stochastics;

pub use error::{LabError, Result};
pub use experiments::{ExperimentConfig, McSummary};
pub use stochastics::{DiscreteDensity, RngStream};
