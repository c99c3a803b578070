//! Numerical checks of the admission staleness bound and of the convergence
//! behaviour under controlled staleness.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::learn::Objective;
use crate::protocol::{aggregate, assign_aggregation_round, client_local_update, Contribution, LocalJob, StalenessDecay};
use crate::queue_sim::{sample_prediction_error, ComputeProfile};
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryParams {
    /// Sub-Gaussian scale of each client's prediction error.
    pub rho: Vec<f64>,
    pub epsilon: f64,
    pub gamma: f64,
    pub l: Option<f64>,
    pub g: Option<f64>,
    pub sigma: Option<f64>,
}

impl TheoryParams {
    pub fn uniform(rho: f64, k: usize, epsilon: f64, gamma: f64) -> Self {
        TheoryParams { rho: vec![rho; k], epsilon, gamma, l: None, g: None, sigma: None }
    }

    /// `ceil(1 + gamma)`.
    pub fn tau_max(&self) -> u64 {
        (1.0 + self.gamma).ceil() as u64
    }

    fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Input("epsilon must lie in (0, 1)".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Input("gamma must be >= 0".into()));
        }
        if self.rho.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Input("rho must be >= 0".into()));
        }
        Ok(())
    }
}

/// Smallest safety buffer satisfying
/// `gamma T + delta >= max_k sqrt(2 rho_k^2 ln(K R / eps))`.
pub fn delta_threshold(params: &TheoryParams, t_sync: f64, k: usize, rounds: usize) -> Result<f64> {
    params.check()?;
    if k * rounds == 0 {
        return Err(Error::Input("K * R must be >= 1".into()));
    }
    let log_term = ((k * rounds) as f64 / params.epsilon).ln();
    let need = params
        .rho
        .iter()
        .map(|r| (2.0 * r * r * log_term).sqrt())
        .fold(0.0, f64::max);
    Ok((need - params.gamma * t_sync).max(0.0))
}

/// Fraction of simulated runs with any staleness above `tau_max`.
///
/// Each run has `K` clients over `R` rounds. A job submitted at `r T` with
/// budget `h = J = T - q_hat - delta` and queue delay `q = q_hat + e` arrives
/// at `r T + T + e - delta`; `e` is drawn from the prediction-error model.
/// Arrivals are clamped at the submission time since delays are nonnegative.
pub fn lemma1_monte_carlo(
    params: &TheoryParams,
    t_sync: f64,
    delta: f64,
    k: usize,
    rounds: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    params.check()?;
    if trials < 100 {
        return Err(Error::Input("need at least 100 trials".into()));
    }
    if params.rho.len() != k {
        return Err(Error::Dimension { expected: k, actual: params.rho.len() });
    }
    let tau_max = params.tau_max();
    let mut violations = 0usize;
    for trial in 0..trials {
        let mut rng: ChaCha8Rng = substream(seed, Purpose::PredictionError, trial as u64, 0);
        let mut violated = false;
        for r in 0..rounds as u64 {
            let submit = r as f64 * t_sync;
            for rho in &params.rho {
                let e = sample_prediction_error(*rho, &mut rng);
                let arrival = (submit + t_sync + e - delta).max(submit);
                let (_, tau) = assign_aggregation_round(r, arrival, t_sync)?;
                violated |= tau > tau_max;
            }
        }
        violations += usize::from(violated);
    }
    Ok(violations as f64 / trials as f64)
}

/// Runs the FedQueue aggregation on an objective with every client computing
/// from the model `tau` rounds old, and returns `||grad F(w_r)||^2` after each
/// round.
#[allow(clippy::too_many_arguments)]
pub fn staleness_convergence_probe(
    objective: &Objective,
    weights: &[f64],
    decay: &StalenessDecay,
    eta: f64,
    local_steps: u64,
    tau: u64,
    rounds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let k_total = objective.num_clients();
    let profile = ComputeProfile::uniform(k_total, 1.0);
    let mut init_rng = substream(seed, Purpose::ModelInit, 0, 0);
    let mut history = vec![objective.initial_model(&mut init_rng)];
    let mut out = Vec::with_capacity(rounds);
    for r in 0..rounds {
        let w = history.last().expect("history starts nonempty").clone();
        let src = &history[r.saturating_sub(tau as usize)];
        let effective_tau = (r as u64).min(tau);
        let mut deltas = Vec::with_capacity(k_total);
        for k in 0..k_total {
            let job = LocalJob {
                k,
                w_start: src,
                max_steps: local_steps,
                time_limit: f64::INFINITY,
                eta,
                batch_size: 1,
            };
            let mut sgd = substream(seed, Purpose::LocalSgd, k as u64, r as u64);
            let mut jit = substream(seed, Purpose::ComputeJitter, k as u64, r as u64);
            deltas.push(client_local_update(&job, objective, &profile, &mut sgd, &mut jit)?.delta);
        }
        let contributions: Vec<Contribution<'_>> = deltas
            .iter()
            .enumerate()
            .map(|(k, d)| Contribution { p: weights[k], tau: effective_tau, delta: d })
            .collect();
        let next = aggregate(&w, &contributions, decay)?;
        let g = objective.global_gradient(&next, weights);
        out.push(g.iter().map(|x| x * x).sum());
        history.push(next);
    }
    Ok(out)
}
