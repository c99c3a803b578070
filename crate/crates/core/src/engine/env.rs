//! Machinery shared by every orchestrator: job submission against the queue
//! and compute models, arrival bookkeeping, evaluation and round records.

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::learn::{Objective, Split};
use crate::metrics::{AdmittedUpdate, ArrivalRecord, ClientRound, DispatchRecord, LogEvent, MetricsLog, RoundRecord};
use crate::protocol::{client_local_update, ClientUpdateMessage, LocalJob};
use crate::queue_sim::{ComputeProfile, QueueSampler};
use crate::rng::{substream, Purpose};

use super::clock::{EventKind, SimClock};

/// A submitted job whose update has not reached the server yet.
#[derive(Debug, Clone)]
pub struct InFlight {
    pub msg: ClientUpdateMessage,
    pub start: f64,
    pub q_hat: Option<f64>,
    pub eta: f64,
}

/// Parameters of one dispatch.
#[derive(Debug, Clone, Copy)]
pub struct Dispatch<'w> {
    pub k: usize,
    pub w: &'w [f64],
    pub s: u64,
    pub max_steps: u64,
    pub time_limit: f64,
    pub eta: f64,
    pub budget_j: Option<f64>,
    pub q_hat: Option<f64>,
}

pub struct Env<'a> {
    pub cfg: &'a ExperimentConfig,
    pub objective: &'a Objective,
    pub weights: Vec<f64>,
    pub profile: ComputeProfile,
    pub sampler: QueueSampler,
    pub seed: u64,
    pub t_sync: f64,
    pub time_budget: f64,
    pub clock: SimClock,
    pub log: MetricsLog,
    next_job: Vec<u64>,
    slots: Vec<Option<InFlight>>,
    round_info: Vec<ClientRound>,
}

impl<'a> Env<'a> {
    pub fn new(cfg: &'a ExperimentConfig, objective: &'a Objective, weights: Vec<f64>) -> Result<Self> {
        let k = cfg.protocol.num_clients;
        if objective.num_clients() != k {
            return Err(Error::Dimension { expected: k, actual: objective.num_clients() });
        }
        let seed = cfg.protocol.seed;
        let t_sync = cfg.fedqueue.t_sync;
        let time_budget = cfg.time_budget();
        Ok(Env {
            cfg,
            objective,
            weights,
            profile: cfg.compute_profile()?,
            sampler: QueueSampler::new(cfg.queue_model()?, seed),
            seed,
            t_sync,
            time_budget,
            clock: SimClock::new(),
            log: MetricsLog::new(cfg.protocol.algorithm.as_str(), seed, k, t_sync, cfg.fedqueue.gamma, time_budget),
            next_job: vec![1; k],
            slots: Vec::new(),
            round_info: vec![ClientRound::default(); k],
        })
    }

    pub fn num_clients(&self) -> usize {
        self.weights.len()
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn initial_model(&self) -> Vec<f64> {
        let mut rng = substream(self.seed, Purpose::ModelInit, 0, 0);
        self.objective.initial_model(&mut rng)
    }

    pub fn record_initial(&mut self, w: &[f64]) {
        let e = self.objective.evaluate(w, Split::Test);
        self.log.initial_loss = e.loss;
        self.log.initial_accuracy = e.accuracy;
        self.log.final_model = w.to_vec();
    }

    /// Warm-up probe on job index 0: returns the observed delay and the
    /// throughput implied by timing `warmup_steps` steps.
    pub fn probe(&mut self, k: usize, warmup_steps: u64) -> (f64, f64) {
        let q = self.sampler.delay(k, 0);
        let mut rng = substream(self.seed, Purpose::ComputeJitter, k as u64, 0);
        let h: f64 = (0..warmup_steps).map(|_| self.profile.sample_step_time(k, &mut rng)).sum();
        let c = if warmup_steps > 0 && h > 0.0 {
            warmup_steps as f64 / h
        } else {
            self.profile.effective_throughput(k)
        };
        self.log.events.push(LogEvent::Warmup { time: 0.0, k, q, throughput: c });
        (q, c)
    }

    /// Submits a job now: draws its queue delay, runs the local update and
    /// schedules its start and arrival. Returns the job slot.
    pub fn dispatch(&mut self, d: Dispatch<'_>) -> Result<usize> {
        let now = self.clock.now();
        let k = d.k;
        let job = self.next_job[k];
        self.next_job[k] += 1;
        let q = self.sampler.delay(k, job as usize);
        let mut sgd = substream(self.seed, Purpose::LocalSgd, k as u64, job);
        let mut jitter = substream(self.seed, Purpose::ComputeJitter, k as u64, job);
        let local = LocalJob {
            k,
            w_start: d.w,
            max_steps: d.max_steps,
            time_limit: d.time_limit,
            eta: d.eta,
            batch_size: self.cfg.protocol.batch_size,
        };
        let outcome = client_local_update(&local, self.objective, &self.profile, &mut sgd, &mut jitter)?;
        let start = now + q;
        let arrival = start + outcome.local_time;
        let msg = ClientUpdateMessage {
            k,
            s: d.s,
            delta: outcome.delta,
            observed_q: q,
            arrival,
            steps_done: outcome.steps_done,
            submitted: now,
            job,
        };
        let flight = InFlight { msg, start, q_hat: d.q_hat, eta: d.eta };
        self.slots.push(Some(flight));
        let slot = self.slots.len() - 1;
        self.clock.schedule(start, EventKind::JobStart, k, slot as u64)?;
        self.clock.schedule(arrival, EventKind::UpdateArrival, k, slot as u64)?;
        self.log.dispatches.push(DispatchRecord {
            k,
            job,
            s: d.s,
            time: now,
            max_steps: d.max_steps,
            eta: d.eta,
            budget_j: d.budget_j,
            q_hat: d.q_hat,
        });
        self.log.events.push(LogEvent::Dispatch { time: now, k, job, s: d.s, steps: d.max_steps, eta: d.eta });
        let info = &mut self.round_info[k];
        info.budget_steps = Some(d.max_steps);
        info.eta = Some(d.eta);
        Ok(slot)
    }

    pub fn note_start(&mut self, slot: u64) {
        if let Some(Some(f)) = self.slots.get(slot as usize) {
            let (k, job) = (f.msg.k, f.msg.job);
            self.log.events.push(LogEvent::JobStart { time: self.clock.now(), k, job });
        }
    }

    /// Removes the job in `slot` at its arrival and logs it.
    pub fn complete(&mut self, slot: u64) -> Result<InFlight> {
        let f = self
            .slots
            .get_mut(slot as usize)
            .and_then(Option::take)
            .ok_or_else(|| Error::Input(format!("no job in flight at slot {slot}")))?;
        let m = &f.msg;
        debug_assert_eq!(self.clock.now(), m.arrival);
        self.log.arrivals.push(ArrivalRecord {
            k: m.k,
            job: m.job,
            s: m.s,
            submitted: m.submitted,
            start: f.start,
            arrival: m.arrival,
            q: m.observed_q,
            q_hat: f.q_hat,
            steps: m.steps_done,
            local_time: m.arrival - f.start,
        });
        self.log.events.push(LogEvent::Arrival {
            time: m.arrival,
            k: m.k,
            job: m.job,
            s: m.s,
            q: m.observed_q,
            steps: m.steps_done,
        });
        let info = &mut self.round_info[m.k];
        info.q = Some(m.observed_q);
        info.e = f.q_hat.map(|p| m.observed_q - p);
        info.steps = Some(m.steps_done);
        Ok(f)
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &InFlight> {
        self.slots.iter().flatten()
    }

    pub fn in_flight_count(&self) -> usize {
        self.in_flight().count()
    }

    pub fn is_busy(&self, k: usize) -> bool {
        self.in_flight().any(|f| f.msg.k == k)
    }

    /// Evaluates `w` and appends a round record, resetting the per-client
    /// accumulators.
    #[allow(clippy::too_many_arguments)]
    pub fn record_round(
        &mut self,
        round: u64,
        w: &[f64],
        admitted: Vec<AdmittedUpdate>,
        deferred: usize,
        buffered: usize,
        q_hat: Option<&[f64]>,
    ) {
        let time = self.clock.now();
        let e = self.objective.evaluate(w, Split::Test);
        let fresh = vec![ClientRound::default(); self.num_clients()];
        let mut clients = std::mem::replace(&mut self.round_info, fresh);
        if let Some(q_hat) = q_hat {
            clients.iter_mut().zip(q_hat).for_each(|(c, q)| c.q_hat = Some(*q));
        }
        self.log.final_model.clear();
        self.log.final_model.extend_from_slice(w);
        let skipped = admitted.is_empty();
        self.log.events.push(if skipped {
            LogEvent::Skip { time, round, deferred, buffered }
        } else {
            LogEvent::Aggregate { time, round, admitted: admitted.len(), deferred, buffered }
        });
        self.log.rounds.push(RoundRecord {
            round,
            time,
            loss: e.loss,
            accuracy: e.accuracy,
            admitted,
            deferred,
            buffered,
            skipped,
            clients,
        });
    }
}
