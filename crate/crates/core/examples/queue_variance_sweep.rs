//! Sweeps the queue log-scale rho and reports how often updates miss their
//! horizon, how late they are when they do, and the time to target.
//!
//! cargo run --release --example queue_variance_sweep -- [config.ini] [trials]

use std::path::Path;

use fedqueue::cli::{primary_target, summarize_group};
use fedqueue::metrics::delay_statistics_from_ratios;
use fedqueue::{run_sweep, ExperimentConfig, MetricsLog};

fn main() -> fedqueue::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = match args.first() {
        Some(p) => ExperimentConfig::load(Path::new(p))?,
        None => ExperimentConfig::default(),
    };
    let trials: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let values: Vec<String> = ["0.1", "0.3", "0.5", "0.7", "0.9"].map(String::from).to_vec();
    let points = run_sweep(&cfg, "queue_rho", &values, trials, 4)?;

    println!("{:>5} {:>7} {:>7} {:>7} {:>10}", "rho", "P_late", "E_d", "R_d", "time(s)");
    for v in &values {
        let logs: Vec<&MetricsLog> = points.iter().filter(|p| &p.value == v).map(|p| &p.log).collect();
        let ratios: Vec<f64> =
            logs.iter().flat_map(|l| l.arrivals.iter().map(|a| a.delay_ratio(l.t_sync))).collect();
        let d = delay_statistics_from_ratios(&ratios);
        let g = summarize_group(v, &logs, primary_target(&cfg));
        let show = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:.2}"));
        let max_late = if d.p_late > 0.0 { d.max_ratio } else { None };
        println!(
            "{v:>5} {:>7.3} {:>7} {:>7} {:>10}",
            d.p_late,
            show(d.expected_late_ratio),
            show(max_late),
            show(g.median_time_to_target)
        );
    }
    Ok(())
}
