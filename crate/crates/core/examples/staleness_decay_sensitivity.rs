//! Final accuracy and time to target under different staleness decays.
//!
//! cargo run --release --example staleness_decay_sensitivity -- [config.ini] [trials]

use std::path::Path;

use fedqueue::cli::{primary_target, summarize_group};
use fedqueue::engine::{build_objective, run_with_objective, trial_seed};
use fedqueue::{ExperimentConfig, MetricsLog};

fn main() -> fedqueue::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let base = match args.first() {
        Some(p) => ExperimentConfig::load(Path::new(p))?,
        None => ExperimentConfig::default(),
    };
    let trials: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let variants = [("harmonic", "0"), ("harmonic", "0.5"), ("harmonic", "2"), ("exp", "0.5"), ("exp", "2")];

    println!("{:<10} {:>5} {:>10} {:>10} {:>9}", "decay", "beta", "time(s)", "final-acc", "mean tau");
    for (mode, beta) in variants {
        let mut logs = Vec::new();
        for t in 0..trials {
            let mut cfg = base.clone();
            cfg.protocol.seed = trial_seed(base.protocol.seed, t);
            cfg.set_by_name("staleness_mode", mode)?;
            cfg.set_by_name("staleness_beta", beta)?;
            let objective = build_objective(&cfg)?;
            logs.push(run_with_objective(&cfg, &objective)?);
        }
        let refs: Vec<&MetricsLog> = logs.iter().collect();
        let g = summarize_group(mode, &refs, primary_target(&base));
        let taus: Vec<u64> =
            logs.iter().flat_map(|l| l.rounds.iter().flat_map(|r| r.admitted.iter().map(|u| u.tau))).collect();
        let mean_tau = taus.iter().sum::<u64>() as f64 / taus.len().max(1) as f64;
        let show = |x: Option<f64>, p: usize| x.map_or("-".to_string(), |x| format!("{x:.p$}"));
        println!(
            "{mode:<10} {beta:>5} {:>10} {:>10} {mean_tau:>9.3}",
            show(g.median_time_to_target, 1),
            show(g.median_final_accuracy, 4)
        );
    }
    Ok(())
}
