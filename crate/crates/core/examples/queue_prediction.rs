//! Samples lognormal queue delays for one client and tracks them with the
//! EWMA predictor, reporting the prediction error at several smoothing rates.
//!
//! cargo run --release --example queue_prediction

use fedqueue::predictor::{PredictorState, QueuePredictor};
use fedqueue::queue_sim::{QueueModel, QueueSampler};

fn main() -> fedqueue::Result<()> {
    let jobs = 2000;
    println!("{:>5} {:>6} {:>6} {:>10} {:>10} {:>10}", "rho", "corr", "alpha", "mean q", "mean err", "rmse");
    for (rho, corr) in [(0.1, 0.0), (0.5, 0.0), (0.9, 0.0), (0.9, 0.9)] {
        let model = QueueModel::lognormal(vec![2.0], rho)?.with_persistence(corr)?;
        for alpha in [0.1, 0.5, 1.0] {
            let mut sampler = QueueSampler::new(model.clone(), 11);
            let mut p = PredictorState::ewma(1, alpha, 2.0)?;
            let (mut sum_q, mut sum_e, mut sum_e2) = (0.0, 0.0, 0.0);
            for n in 1..=jobs {
                let q = sampler.delay(0, n);
                let e = q - p.predict(0);
                p.observe(0, q)?;
                sum_q += q;
                sum_e += e;
                sum_e2 += e * e;
            }
            let n = jobs as f64;
            println!(
                "{rho:>5} {corr:>6} {alpha:>6} {:>10.3} {:>10.3} {:>10.3}",
                sum_q / n,
                sum_e / n,
                (sum_e2 / n).sqrt()
            );
        }
    }
    Ok(())
}
