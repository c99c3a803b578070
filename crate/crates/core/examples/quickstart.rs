//! One FedQueue run with the default configuration: per-round progress, then
//! the run summary as JSON.
//!
//! cargo run --release --example quickstart -- [config.ini]

use std::path::Path;

use fedqueue::{run_experiment, summarize, ExperimentConfig};

fn main() -> fedqueue::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => ExperimentConfig::load(Path::new(&p))?,
        None => ExperimentConfig::default(),
    };
    let log = run_experiment(&cfg)?;

    println!("{:>5} {:>8} {:>9} {:>9} {:>8} {:>8}", "round", "time", "loss", "accuracy", "admitted", "mean tau");
    for r in &log.rounds {
        let acc = r.accuracy.map_or("-".to_string(), |a| format!("{a:.4}"));
        let tau = r.mean_tau().map_or("-".to_string(), |t| format!("{t:.2}"));
        println!("{:>5} {:>8.1} {:>9.4} {:>9} {:>8} {:>8}", r.round, r.time, r.loss, acc, r.admitted.len(), tau);
    }
    let summary = summarize(&log, &cfg);
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}
