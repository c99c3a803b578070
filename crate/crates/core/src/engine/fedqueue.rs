//! FedQueue server loop: budgeted dispatch at round starts, EWMA updates on
//! receipt, inclusive cutoffs with buffering of late updates, and
//! staleness-weighted aggregation.

use crate::config::{AdmissionHorizon, BroadcastWhen};
use crate::error::{Error, Result};
use crate::metrics::AdmittedUpdate;
use crate::predictor::{PredictorState, QueuePredictor};
use crate::protocol::{
    aggregate, assign_aggregation_round, compute_budget, cutoff, partition_admissions, scale_learning_rate,
    Contribution, ServerState, StalenessDecay, StepBudget,
};

use super::clock::EventKind;
use super::env::{Dispatch, Env};

struct Server {
    state: ServerState,
    throughput: Vec<f64>,
    decay: StalenessDecay,
    /// Smallest step budget among this round's dispatches so far.
    round_e_min: Option<u64>,
}

impl Server {
    fn budget(&self, env: &Env<'_>, k: usize) -> StepBudget {
        let fq = &env.cfg.fedqueue;
        compute_budget(fq.t_sync, self.state.predictor.predict(k), fq.delta, self.throughput[k], fq.e_floor)
    }

    fn rate(&self, env: &Env<'_>, e_min: u64, e_k: u64) -> Result<f64> {
        let base = env.cfg.fedqueue.lr_base;
        if env.cfg.ablation.use_inverse_lr {
            scale_learning_rate(base, e_min, e_k)
        } else {
            Ok(base)
        }
    }

    fn send(&mut self, env: &mut Env<'_>, k: usize, b: StepBudget, eta: f64) -> Result<()> {
        let q_hat = self.state.predictor.predict(k);
        // E_floor may exceed what J allows; the job then runs its floor steps.
        let time_limit = b.j.max(b.e as f64 / self.throughput[k]);
        let round = self.state.round;
        let w = std::mem::take(&mut self.state.w);
        let res = env.dispatch(Dispatch {
            k,
            w: &w,
            s: round,
            max_steps: b.e,
            time_limit,
            eta,
            budget_j: Some(b.j),
            q_hat: Some(q_hat),
        });
        self.state.w = w;
        res?;
        self.state.budgets[k] = Some(b.with_rate(eta));
        Ok(())
    }

    /// Budgets and dispatches every idle client at the start of a round.
    fn start_round(&mut self, env: &mut Env<'_>) -> Result<()> {
        let idle: Vec<usize> = (0..env.num_clients()).filter(|k| !env.is_busy(*k)).collect();
        let budgets: Vec<StepBudget> = idle.iter().map(|k| self.budget(env, *k)).collect();
        let e_min = budgets.iter().map(|b| b.e).min();
        self.round_e_min = e_min;
        for (k, b) in idle.into_iter().zip(budgets) {
            let eta = self.rate(env, e_min.expect("nonempty when budgets exist"), b.e)?;
            self.send(env, k, b, eta)?;
        }
        Ok(())
    }

    /// Immediate re-broadcast to a client whose update just arrived.
    fn redispatch(&mut self, env: &mut Env<'_>, k: usize) -> Result<()> {
        let b = self.budget(env, k);
        let e_min = self.round_e_min.map_or(b.e, |m| m.min(b.e));
        self.round_e_min = Some(e_min);
        let eta = self.rate(env, e_min, b.e)?;
        self.send(env, k, b, eta)
    }

    fn close_round(&mut self, env: &mut Env<'_>) -> Result<()> {
        let t_sync = env.t_sync;
        let r = self.state.round;
        let (admitted, rest) = partition_admissions(std::mem::take(&mut self.state.buffer), cutoff(r, t_sync));
        self.state.buffer = rest;
        let mut records = Vec::with_capacity(admitted.len());
        let mut taus = Vec::with_capacity(admitted.len());
        for m in &admitted {
            let (ra, tau) = assign_aggregation_round(m.s, m.arrival, t_sync)?;
            if ra != r {
                return Err(Error::Input(format!(
                    "update from client {} (s={}, a={}) belongs to round {ra}, not {r}",
                    m.k, m.s, m.arrival
                )));
            }
            taus.push(tau);
        }
        if !admitted.is_empty() {
            let contributions: Vec<Contribution<'_>> = admitted
                .iter()
                .zip(&taus)
                .map(|(m, tau)| Contribution { p: self.state.weights[m.k], tau: *tau, delta: &m.delta })
                .collect();
            let terms: Vec<(f64, u64)> = contributions.iter().map(|c| (c.p, c.tau)).collect();
            let coeffs = crate::protocol::aggregation_coefficients(&terms, &self.decay)?;
            self.state.w = aggregate(&self.state.w, &contributions, &self.decay)?;
            for ((m, tau), c) in admitted.iter().zip(&taus).zip(coeffs) {
                records.push(AdmittedUpdate { k: m.k, job: m.job, s: m.s, tau: *tau, coefficient: c });
            }
        }
        let deferred = env.in_flight().filter(|f| f.msg.s == r).count()
            + self.state.buffer.iter().filter(|m| m.s == r).count();
        self.state.admitted_last = admitted.iter().map(|m| m.k).collect();
        let q_hat: Vec<f64> = (0..env.num_clients()).map(|k| self.state.predictor.predict(k)).collect();
        let buffered = self.state.buffer.len();
        env.record_round(r, &self.state.w, records, deferred, buffered, Some(&q_hat));
        Ok(())
    }
}

pub fn run_fedqueue(env: &mut Env<'_>) -> Result<()> {
    let cfg = env.cfg;
    let fq = &cfg.fedqueue;
    let k_total = env.num_clients();
    let mut predictor = if cfg.ablation.use_ewma {
        PredictorState::ewma(k_total, fq.alpha, fq.q_init)?
    } else {
        let model = env.sampler.model().clone();
        PredictorState::fixed_estimates((0..k_total).map(|k| model.location(k)).collect())?
    };
    let mut throughput = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let (q0, c) = env.probe(k, fq.warmup_steps);
        predictor.seed(k, q0)?;
        throughput.push(c);
    }
    let w0 = env.initial_model();
    env.record_initial(&w0);
    let decay = match fq.admission_horizon {
        AdmissionHorizon::Horizon => cfg.staleness_decay(),
        AdmissionHorizon::All => StalenessDecay::flat(),
    };
    let mut server = Server {
        state: ServerState::new(w0, predictor, env.weights.clone())?,
        throughput,
        decay,
        round_e_min: None,
    };

    let rounds = cfg.protocol.num_rounds;
    if rounds == 0 || cutoff(0, env.t_sync) > env.time_budget {
        return Ok(());
    }
    server.start_round(env)?;
    env.clock.schedule(cutoff(0, env.t_sync), EventKind::RoundBoundary, 0, 0)?;

    while let Some(ev) = env.clock.pop() {
        match ev.kind {
            EventKind::JobStart => env.note_start(ev.payload),
            EventKind::UpdateArrival => {
                let job = env.complete(ev.payload)?;
                let k = job.msg.k;
                server.state.predictor.observe(k, job.msg.observed_q)?;
                server.state.buffer.push(job.msg);
                if fq.broadcast_when == BroadcastWhen::Immediate {
                    server.redispatch(env, k)?;
                }
            }
            EventKind::Timer => {}
            EventKind::RoundBoundary => {
                server.close_round(env)?;
                server.state.round += 1;
                let next = server.state.round;
                if next >= rounds || cutoff(next, env.t_sync) > env.time_budget {
                    break;
                }
                server.start_round(env)?;
                env.clock.schedule(cutoff(next, env.t_sync), EventKind::RoundBoundary, 0, next)?;
            }
        }
    }
    env.log.pending_deferred = env.in_flight_count() + server.state.buffer.len();
    Ok(())
}
