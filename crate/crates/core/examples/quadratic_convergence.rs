//! Squared gradient norm on a strongly convex quadratic when every client
//! computes from a model tau rounds old.
//!
//! cargo run --release --example quadratic_convergence

use fedqueue::metrics::staleness_convergence_probe;
use fedqueue::protocol::StalenessDecay;
use fedqueue::{build_objective, ExperimentConfig};

fn main() -> fedqueue::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.set_by_name("dataset", "quadratic")?;
    cfg.set_by_name("quad.spread", "1")?;
    cfg.set_by_name("quad.sigma", "0.5")?;
    let objective = build_objective(&cfg)?;
    let k = cfg.protocol.num_clients;
    let weights = vec![1.0 / k as f64; k];
    let decay = StalenessDecay::harmonic(0.5);
    let checkpoints = [1, 5, 10, 25, 50, 100];

    print!("{:>4}", "tau");
    for c in checkpoints {
        print!(" {:>11}", format!("r={c}"));
    }
    println!();
    for tau in [0, 1, 2, 4] {
        let g = staleness_convergence_probe(&objective, &weights, &decay, 0.01, 10, tau, 100, 3)?;
        print!("{tau:>4}");
        for c in checkpoints {
            print!(" {:>11.3e}", g[c - 1]);
        }
        println!();
    }
    Ok(())
}
