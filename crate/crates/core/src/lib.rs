//! Queue-aware federated learning.
//!
//! The protocol core budgets each client's job time from a predicted
//! scheduler queue delay, aggregates at fixed cutoffs and buffers late
//! updates with staleness-decayed weights. A deterministic discrete-event
//! engine runs it, and four comparison baselines, against simulated queues.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod learn;
pub mod metrics;
pub mod predictor;
pub mod protocol;
pub mod queue_sim;
pub mod rng;

pub use config::{Algorithm, ExperimentConfig};
pub use engine::{build_objective, run_experiment, run_sweep, run_with_objective};
pub use error::{Error, Result};
pub use metrics::{summarize, MetricsLog, Summary};
