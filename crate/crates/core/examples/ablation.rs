//! Baseline FedQueue against three variants that each disable one mechanism:
//! inverse learning-rate scaling, the EWMA queue predictor and staleness decay.
//!
//! cargo run --release --example ablation -- [config.ini] [trials]

use std::path::Path;

use fedqueue::cli::{primary_target, run_ablation, summarize_group};
use fedqueue::metrics::MetricsLog;
use fedqueue::ExperimentConfig;

fn main() -> fedqueue::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = match args.first() {
        Some(p) => ExperimentConfig::load(Path::new(p))?,
        None => ExperimentConfig::default(),
    };
    let trials: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let runs = run_ablation(&cfg, trials, 4)?;
    println!(
        "{:<22} {:>10} {:>12} {:>8} {:>10} {:>8}",
        "variant", "final-acc", "time-to-A*", "P_late", "mean tau", "max tau"
    );
    for (variant, points) in &runs {
        let logs: Vec<&MetricsLog> = points.iter().map(|p| &p.log).collect();
        let g = summarize_group(variant, &logs, primary_target(&cfg));
        let taus: Vec<f64> = logs
            .iter()
            .flat_map(|l| l.rounds.iter().flat_map(|r| r.admitted.iter().map(|u| u.tau as f64)))
            .collect();
        let mean_tau = taus.iter().sum::<f64>() / taus.len().max(1) as f64;
        let max_tau = taus.iter().copied().fold(0.0, f64::max);
        let show = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
        println!(
            "{:<22} {:>10} {:>12} {:>8.3} {:>10.3} {:>8}",
            variant,
            show(g.median_final_accuracy, 4),
            show(g.median_time_to_target, 1),
            g.p_late,
            mean_tau,
            max_tau
        );
    }
    Ok(())
}
