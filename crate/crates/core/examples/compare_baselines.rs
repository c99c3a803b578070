//! Runs FedQueue and the four baselines on the same seeds and prints median
//! time-to-target, max accuracy, model movement ratio and local steps.
//!
//! cargo run --release --example compare_baselines -- [config.ini] [trials]

use std::path::Path;

use fedqueue::cli::primary_target;
use fedqueue::engine::{build_objective, run_with_objective, trial_seed};
use fedqueue::metrics::{local_steps_until, median, median_time, time_to_target, transfers_until};
use fedqueue::{Algorithm, ExperimentConfig, MetricsLog};

fn main() -> fedqueue::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let base = match args.first() {
        Some(p) => ExperimentConfig::load(Path::new(p))?,
        None => ExperimentConfig::default(),
    };
    let trials: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let target = primary_target(&base);
    let counting = base.metrics.transfer_counting;

    // logs[algorithm][trial]
    let mut logs: Vec<Vec<MetricsLog>> = vec![Vec::new(); Algorithm::ALL.len()];
    for t in 0..trials {
        let mut cfg = base.clone();
        cfg.protocol.seed = trial_seed(base.protocol.seed, t);
        let objective = build_objective(&cfg)?;
        for (i, algo) in Algorithm::ALL.iter().enumerate() {
            cfg.protocol.algorithm = *algo;
            logs[i].push(run_with_objective(&cfg, &objective)?);
        }
    }

    println!("{:<12} {:>9} {:>12} {:>8} {:>12} {:>7}", "method", "max-acc", "time-to-A*", "D_r", "local steps", "fails");
    let reference = &logs[0];
    for (i, algo) in Algorithm::ALL.iter().enumerate() {
        let runs = &logs[i];
        let max_acc: Vec<f64> = runs.iter().filter_map(|l| l.max_accuracy()).collect();
        let times: Vec<Option<f64>> = runs.iter().map(|l| time_to_target(l, target)).collect();
        // Per-seed movement ratio against FedQueue on the same seed.
        let ratios: Vec<Option<f64>> = runs
            .iter()
            .zip(reference)
            .map(|(l, r)| {
                let tl = time_to_target(l, target)?;
                let tr = time_to_target(r, target)?;
                Some(transfers_until(l, tl, counting) as f64 / transfers_until(r, tr, counting) as f64)
            })
            .collect();
        let steps: Vec<Option<f64>> = runs
            .iter()
            .map(|l| time_to_target(l, target).map(|t| local_steps_until(l, t) as f64))
            .collect();
        let show = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
        println!(
            "{:<12} {:>9} {:>12} {:>8} {:>12} {:>7}",
            algo.as_str(),
            show(median(&max_acc), 4),
            show(median_time(&times), 1),
            show(median_time(&ratios), 2),
            show(median_time(&steps), 0),
            runs.iter().filter(|l| l.failed.is_some()).count()
        );
    }
    Ok(())
}
