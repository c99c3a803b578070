//! A larger safety buffer delta makes updates late less often but leaves less
//! of each horizon for local computation.
//!
//! cargo run --release --example safety_buffer_tradeoff -- [config.ini] [trials]

use std::path::Path;

use fedqueue::cli::{primary_target, summarize_group};
use fedqueue::{run_sweep, ExperimentConfig, MetricsLog};

fn main() -> fedqueue::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = match args.first() {
        Some(p) => ExperimentConfig::load(Path::new(p))?,
        None => ExperimentConfig::default(),
    };
    let trials: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let values: Vec<String> = ["0", "1", "2", "4", "6"].map(String::from).to_vec();
    let points = run_sweep(&cfg, "delta", &values, trials, 4)?;

    println!("{:>6} {:>7} {:>12} {:>10} {:>10}", "delta", "P_late", "steps/job", "time(s)", "final-acc");
    for v in &values {
        let logs: Vec<&MetricsLog> = points.iter().filter(|p| &p.value == v).map(|p| &p.log).collect();
        let g = summarize_group(v, &logs, primary_target(&cfg));
        let (steps, jobs) = logs
            .iter()
            .flat_map(|l| &l.dispatches)
            .fold((0u64, 0u64), |(s, n), d| (s + d.max_steps, n + 1));
        let show = |x: Option<f64>, p: usize| x.map_or("-".to_string(), |x| format!("{x:.p$}"));
        println!(
            "{v:>6} {:>7.3} {:>12.1} {:>10} {:>10}",
            g.p_late,
            steps as f64 / jobs.max(1) as f64,
            show(g.median_time_to_target, 1),
            show(g.median_final_accuracy, 4)
        );
    }
    Ok(())
}
