//! Run records, derived statistics, output files and theory checks.

pub mod log;
pub mod output;
pub mod stats;
pub mod theory;

pub use log::{AdmittedUpdate, ArrivalRecord, ClientRound, DispatchRecord, LogEvent, MetricsLog, RoundRecord};
pub use output::{summarize, write_outputs, Summary};
pub use stats::{
    admission_summary, delay_statistics, delay_statistics_from_ratios, error_stats, local_steps_until, median,
    median_time, movement_ratio, prediction_error_stats, time_to_target, transfers_until, AdmissionRow,
    DelayStatistics, ErrorStats, Target,
};
pub use theory::{delta_threshold, lemma1_monte_carlo, staleness_convergence_probe, TheoryParams};
