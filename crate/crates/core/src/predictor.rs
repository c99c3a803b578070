//! Online queue-delay predictors.
//!
//! The server only needs a point estimate per client, so anything that can
//! `predict` and `observe` plugs in through [`QueuePredictor`].

use crate::error::{Error, Result};

pub trait QueuePredictor: Send {
    /// Current estimate for client `k`, seconds.
    fn predict(&self, k: usize) -> f64;

    /// Feeds one realised delay.
    fn observe(&mut self, k: usize, observed_q: f64) -> Result<()>;

    /// Replaces the estimate outright (warm-up probe).
    fn seed(&mut self, k: usize, observed_q: f64) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Ewma,
    Static,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    pub kind: PredictorKind,
    pub q_hat: Vec<f64>,
    pub alpha: f64,
    pub q_init: f64,
    pub observations: Vec<u64>,
}

impl PredictorState {
    pub fn ewma(num_clients: usize, alpha: f64, q_init: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config("alpha", "EWMA rate must lie in (0, 1]"));
        }
        if !(q_init >= 0.0 && q_init.is_finite()) {
            return Err(Error::config("q_init", "must be finite and >= 0"));
        }
        Ok(PredictorState {
            kind: PredictorKind::Ewma,
            q_hat: vec![q_init; num_clients],
            alpha,
            q_init,
            observations: vec![0; num_clients],
        })
    }

    /// Predictor frozen at the given per-client estimates.
    pub fn fixed_estimates(estimates: Vec<f64>) -> Result<Self> {
        if estimates.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::Input("static estimates must be finite and >= 0".into()));
        }
        let n = estimates.len();
        Ok(PredictorState {
            kind: PredictorKind::Static,
            q_init: 0.0,
            alpha: 1.0,
            observations: vec![0; n],
            q_hat: estimates,
        })
    }
}

fn check_observation(observed_q: f64) -> Result<()> {
    if !(observed_q.is_finite() && observed_q >= 0.0) {
        return Err(Error::Input(format!(
            "queue delay observation must be finite and >= 0, got {observed_q}"
        )));
    }
    Ok(())
}

/// `q_hat[k] <- (1 - alpha) q_hat[k] + alpha q`. Static predictors keep their
/// estimate but still count the observation.
pub fn ewma_update(state: &mut PredictorState, k: usize, observed_q: f64) -> Result<()> {
    check_observation(observed_q)?;
    if state.kind == PredictorKind::Ewma {
        let prior = state.q_hat[k];
        state.q_hat[k] = (1.0 - state.alpha) * prior + state.alpha * observed_q;
    }
    state.observations[k] += 1;
    Ok(())
}

pub fn predict(state: &PredictorState, k: usize) -> f64 {
    state.q_hat[k]
}

impl QueuePredictor for PredictorState {
    fn predict(&self, k: usize) -> f64 {
        predict(self, k)
    }

    fn observe(&mut self, k: usize, observed_q: f64) -> Result<()> {
        ewma_update(self, k, observed_q)
    }

    fn seed(&mut self, k: usize, observed_q: f64) -> Result<()> {
        check_observation(observed_q)?;
        if self.kind == PredictorKind::Ewma {
            self.q_hat[k] = observed_q;
        }
        Ok(())
    }
}
