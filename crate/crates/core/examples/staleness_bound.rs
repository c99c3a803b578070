//! The high-probability staleness bound: for each prediction-error scale
//! rho, the smallest safety buffer that keeps every update within tau_max
//! rounds, and a Monte Carlo estimate of how often that buffer fails.
//!
//! cargo run --release --example staleness_bound

use fedqueue::metrics::{delta_threshold, lemma1_monte_carlo, TheoryParams};

fn main() -> fedqueue::Result<()> {
    let (t_sync, k, rounds, epsilon) = (10.0, 4, 50, 0.05);
    println!("K = {k}, R = {rounds}, T = {t_sync}, epsilon = {epsilon}");
    println!("{:>5} {:>6} {:>8} {:>8} {:>12} {:>12}", "rho", "gamma", "tau_max", "delta*", "P(viol)", "P(viol, 0)");
    for gamma in [0.0, 0.2, 1.0] {
        for rho in [0.5, 1.0, 2.0, 4.0] {
            let p = TheoryParams::uniform(rho, k, epsilon, gamma);
            let delta = delta_threshold(&p, t_sync, k, rounds)?;
            let at_bound = lemma1_monte_carlo(&p, t_sync, delta, k, rounds, 10_000, 1)?;
            let unbuffered = lemma1_monte_carlo(&p, t_sync, 0.0, k, rounds, 10_000, 1)?;
            println!(
                "{rho:>5} {gamma:>6} {:>8} {delta:>8.3} {at_bound:>12.4} {unbuffered:>12.4}",
                p.tau_max()
            );
        }
    }
    Ok(())
}
