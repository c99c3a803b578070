//! FedQueue server and client mechanisms as pure functions.

use rand::Rng;

use crate::error::{Error, Result};
use crate::learn::Objective;
use crate::predictor::PredictorState;
use crate::queue_sim::{compute_time, ComputeProfile};

/// Job-time and step budget before a learning rate is attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBudget {
    pub j: f64,
    pub e: u64,
}

impl StepBudget {
    pub fn with_rate(self, eta: f64) -> RoundBudget {
        RoundBudget { j: self.j, e: self.e, eta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundBudget {
    /// Seconds of compute the job may use.
    pub j: f64,
    /// Local SGD steps.
    pub e: u64,
    pub eta: f64,
}

/// One client's contribution flowing back to the server.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdateMessage {
    pub k: usize,
    /// Round whose global model the update started from.
    pub s: u64,
    pub delta: Vec<f64>,
    pub observed_q: f64,
    pub arrival: f64,
    pub steps_done: u64,
    /// Time the job was handed to the scheduler.
    pub submitted: f64,
    /// Per-client job counter, used to address the delay stream.
    pub job: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayMode {
    Harmonic,
    Exponential,
}

impl DecayMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "harmonic" => Some(DecayMode::Harmonic),
            "exponential" => Some(DecayMode::Exponential),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DecayMode::Harmonic => "harmonic",
            DecayMode::Exponential => "exponential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StalenessDecay {
    pub mode: DecayMode,
    pub beta: f64,
}

impl StalenessDecay {
    pub fn harmonic(beta: f64) -> Self {
        StalenessDecay { mode: DecayMode::Harmonic, beta }
    }

    pub fn exponential(beta: f64) -> Self {
        StalenessDecay { mode: DecayMode::Exponential, beta }
    }

    /// `phi == 1` everywhere.
    pub fn flat() -> Self {
        StalenessDecay::harmonic(0.0)
    }

    pub fn weight(&self, tau: u64) -> f64 {
        if tau == 0 || self.beta == 0.0 {
            return 1.0;
        }
        let t = tau as f64;
        match self.mode {
            DecayMode::Harmonic => 1.0 / (1.0 + self.beta * t),
            DecayMode::Exponential => (-self.beta * t).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientWeightMode {
    Equal,
    DataSize,
}

impl ClientWeightMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "equal" => Some(ClientWeightMode::Equal),
            "data_size" | "datasize" | "size" => Some(ClientWeightMode::DataSize),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClientWeightMode::Equal => "equal",
            ClientWeightMode::DataSize => "data_size",
        }
    }
}

/// Convex client weights `p_k`.
pub fn client_weights(mode: ClientWeightMode, sizes: &[usize]) -> Vec<f64> {
    let k = sizes.len();
    match mode {
        ClientWeightMode::Equal => vec![1.0 / k as f64; k],
        ClientWeightMode::DataSize => {
            let total: usize = sizes.iter().sum();
            if total == 0 {
                vec![1.0 / k as f64; k]
            } else {
                sizes.iter().map(|n| *n as f64 / total as f64).collect()
            }
        }
    }
}

/// Mutable server state owned by the engine loop.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub w: Vec<f64>,
    pub round: u64,
    pub buffer: Vec<ClientUpdateMessage>,
    pub predictor: PredictorState,
    /// Budget of each client's most recent dispatch.
    pub budgets: Vec<Option<RoundBudget>>,
    pub admitted_last: Vec<usize>,
    pub weights: Vec<f64>,
}

impl ServerState {
    pub fn new(w: Vec<f64>, predictor: PredictorState, weights: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if predictor.q_hat.len() != k {
            return Err(Error::Dimension { expected: k, actual: predictor.q_hat.len() });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Input("client weights must be nonnegative and sum to 1".into()));
        }
        Ok(ServerState {
            w,
            round: 0,
            buffer: Vec::new(),
            predictor,
            budgets: vec![None; k],
            admitted_last: (0..k).collect(),
            weights,
        })
    }
}

/// `J = T_sync - q_hat - delta`, `E = max(E_floor, floor(c * max(J, 0)))`.
pub fn compute_budget(t_sync: f64, q_hat: f64, delta: f64, c_k: f64, e_floor: u64) -> StepBudget {
    let j = t_sync - q_hat - delta;
    let raw = (c_k * j.max(0.0)).floor();
    let e = if raw.is_finite() { raw as u64 } else { u64::MAX };
    StepBudget { j, e: e.max(e_floor) }
}

/// `eta_base * E_min / E_k`.
pub fn scale_learning_rate(eta_base: f64, e_min: u64, e_k: u64) -> Result<f64> {
    if e_k == 0 || e_min == 0 {
        return Err(Error::Input("step budgets must be >= 1 for learning-rate scaling".into()));
    }
    if e_min > e_k {
        return Err(Error::Input(format!("E_min = {e_min} exceeds E_k = {e_k}")));
    }
    Ok(eta_base * e_min as f64 / e_k as f64)
}

pub fn staleness_weight(decay: &StalenessDecay, tau: i64) -> Result<f64> {
    if tau < 0 {
        return Err(Error::Input(format!("staleness must be >= 0, got {tau}")));
    }
    Ok(decay.weight(tau as u64))
}

/// Cutoff of round `r`: `(r + 1) * T_sync`, computed without accumulation.
pub fn cutoff(round: u64, t_sync: f64) -> f64 {
    (round + 1) as f64 * t_sync
}

/// First round `r >= s` whose cutoff the arrival meets, with `tau = r - s`.
pub fn assign_aggregation_round(s: u64, arrival: f64, t_sync: f64) -> Result<(u64, u64)> {
    if !(arrival.is_finite() && t_sync > 0.0) {
        return Err(Error::Input("arrival must be finite and T_sync positive".into()));
    }
    let start = s as f64 * t_sync;
    if arrival < start {
        return Err(Error::Causality { arrival, round_start: start });
    }
    let guess = (arrival / t_sync).ceil() - 1.0;
    let mut r = if guess > s as f64 { guess as u64 } else { s };
    // The division can be off by one ulp near a cutoff; settle against the
    // cutoffs exactly as the engine computes them.
    while r > s && arrival <= cutoff(r - 1, t_sync) {
        r -= 1;
    }
    while arrival > cutoff(r, t_sync) {
        r += 1;
    }
    Ok((r, r - s))
}

/// Splits a buffer into messages arriving by `cutoff` (inclusive) and the rest.
/// Relative order is kept on both sides.
pub fn partition_admissions(
    buffer: Vec<ClientUpdateMessage>,
    cutoff: f64,
) -> (Vec<ClientUpdateMessage>, Vec<ClientUpdateMessage>) {
    buffer.into_iter().partition(|m| m.arrival <= cutoff)
}

#[derive(Debug, Clone, Copy)]
pub struct Contribution<'a> {
    pub p: f64,
    pub tau: u64,
    pub delta: &'a [f64],
}

/// Normalized coefficients `p_k phi(tau_k) / S`.
pub fn aggregation_coefficients(
    terms: &[(f64, u64)],
    decay: &StalenessDecay,
) -> Result<Vec<f64>> {
    if terms.is_empty() {
        return Err(Error::Input("cannot aggregate an empty admitted set".into()));
    }
    let raw: Vec<f64> = terms.iter().map(|(p, tau)| p * decay.weight(*tau)).collect();
    let s: f64 = raw.iter().sum();
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Numerical(format!("aggregation normalizer S = {s}")));
    }
    Ok(raw.into_iter().map(|x| x / s).collect())
}

/// `w + (1/S) sum p_k phi(tau_k) delta_k`.
pub fn aggregate(w: &[f64], admitted: &[Contribution<'_>], decay: &StalenessDecay) -> Result<Vec<f64>> {
    for c in admitted {
        if c.delta.len() != w.len() {
            return Err(Error::Dimension { expected: w.len(), actual: c.delta.len() });
        }
    }
    let terms: Vec<(f64, u64)> = admitted.iter().map(|c| (c.p, c.tau)).collect();
    let coeffs = aggregation_coefficients(&terms, decay)?;
    let mut out = w.to_vec();
    for (c, a) in admitted.iter().zip(coeffs) {
        out.iter_mut().zip(c.delta).for_each(|(o, d)| *o += a * d);
    }
    Ok(out)
}

/// Work order for one client job.
#[derive(Debug, Clone, Copy)]
pub struct LocalJob<'a> {
    pub k: usize,
    pub w_start: &'a [f64],
    pub max_steps: u64,
    /// Compute seconds available; `f64::INFINITY` for step-bounded jobs.
    pub time_limit: f64,
    pub eta: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub delta: Vec<f64>,
    pub steps_done: u64,
    pub local_time: f64,
}

/// Runs local SGD until the step budget or the time limit is exhausted.
pub fn client_local_update<R: Rng + ?Sized, J: Rng + ?Sized>(
    job: &LocalJob<'_>,
    objective: &Objective,
    profile: &ComputeProfile,
    sgd_rng: &mut R,
    jitter_rng: &mut J,
) -> Result<LocalOutcome> {
    if !(job.eta > 0.0 && job.eta.is_finite()) {
        return Err(Error::Input(format!("learning rate must be > 0, got {}", job.eta)));
    }
    let p = job.w_start.len();
    if p != objective.dim() {
        return Err(Error::Dimension { expected: objective.dim(), actual: p });
    }
    let mut w = job.w_start.to_vec();
    let mut grad = vec![0.0; p];
    let mut scratch = Vec::new();
    let limit = job.time_limit * (1.0 + 1e-12);
    let mut steps = 0u64;
    let mut elapsed = 0.0;
    while steps < job.max_steps {
        let dt = profile.sample_step_time(job.k, jitter_rng);
        if elapsed + dt > limit {
            break;
        }
        objective.stochastic_gradient_into(job.k, &w, job.batch_size, sgd_rng, &mut grad, &mut scratch)?;
        w.iter_mut().zip(&grad).for_each(|(wi, gi)| *wi -= job.eta * gi);
        elapsed += dt;
        steps += 1;
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("client {} diverged", job.k)));
    }
    let local_time = if profile.jitter == 0.0 {
        compute_time(profile, job.k, steps)
    } else {
        elapsed
    };
    let delta = w.iter().zip(job.w_start).map(|(a, b)| a - b).collect();
    Ok(LocalOutcome { delta, steps_done: steps, local_time })
}
