//! Comparison orchestrators sharing the FedQueue environment: synchronous
//! FedAvg, per-arrival FedAsync, buffer-triggered FedBuff and a lite
//! variant of FedCompass.
//!
//! All baselines train with `lr_base`, run step-bounded jobs and stop at the
//! experiment's time budget.

use crate::config::{AsyncMixing, StalenessFn};
use crate::engine::clock::EventKind;
use crate::engine::env::{Dispatch, Env};
use crate::error::{Error, Result};
use crate::metrics::AdmittedUpdate;
use crate::protocol::ClientUpdateMessage;

fn send(env: &mut Env<'_>, k: usize, w: &[f64], version: u64, steps: u64) -> Result<usize> {
    env.dispatch(Dispatch {
        k,
        w,
        s: version,
        max_steps: steps,
        time_limit: f64::INFINITY,
        eta: env.cfg.fedqueue.lr_base,
        budget_j: None,
        q_hat: None,
    })
}

fn start(env: &mut Env<'_>) -> Vec<f64> {
    let w = env.initial_model();
    env.record_initial(&w);
    w
}

fn check_finite(w: &[f64], algo: &str) -> Result<()> {
    if w.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{algo} global model diverged")))
    }
}

fn stale_count(admitted: &[AdmittedUpdate]) -> usize {
    admitted.iter().filter(|u| u.tau > 0).count()
}

/// Synchronous rounds: every client trains its fixed step count from the
/// same model and the server waits for all of them before averaging.
pub fn run_fedavg(env: &mut Env<'_>) -> Result<()> {
    let k_total = env.num_clients();
    let steps = env.cfg.fedavg_steps();
    if steps.len() != k_total {
        return Err(Error::Dimension { expected: k_total, actual: steps.len() });
    }
    let mut w = start(env);
    let mut round = 0u64;
    loop {
        for (k, &e) in steps.iter().enumerate() {
            send(env, k, &w, round, e)?;
        }
        let mut arrived: Vec<ClientUpdateMessage> = Vec::with_capacity(k_total);
        while arrived.len() < k_total {
            let ev = env.clock.pop().ok_or_else(|| Error::Input("event queue drained mid-round".into()))?;
            match ev.kind {
                EventKind::JobStart => env.note_start(ev.payload),
                EventKind::UpdateArrival => arrived.push(env.complete(ev.payload)?.msg),
                _ => {}
            }
        }
        if env.now() > env.time_budget {
            break;
        }
        let total: f64 = arrived.iter().map(|m| env.weights[m.k]).sum();
        let mut admitted = Vec::with_capacity(k_total);
        for m in &arrived {
            let c = env.weights[m.k] / total;
            w.iter_mut().zip(&m.delta).for_each(|(wi, d)| *wi += c * d);
            admitted.push(AdmittedUpdate { k: m.k, job: m.job, s: m.s, tau: 0, coefficient: c });
        }
        check_finite(&w, "fedavg")?;
        env.record_round(round, &w, admitted, 0, 0, None);
        round += 1;
    }
    Ok(())
}

/// Applies every arrival immediately with weight `alpha * s(tau)` and sends
/// the client back out with the new model.
pub fn run_fedasync(env: &mut Env<'_>) -> Result<()> {
    let cfg = &env.cfg.fedasync;
    let (steps, alpha, sfn) = (cfg.num_local_steps, cfg.alpha, cfg.staleness_fn);
    let interpolate = cfg.mixing == AsyncMixing::Interpolate;
    let mut w = start(env);
    let mut version = 0u64;
    // Model each client last received; only read when interpolating.
    let mut sent = vec![if interpolate { w.clone() } else { Vec::new() }; env.num_clients()];
    for k in 0..env.num_clients() {
        send(env, k, &w, version, steps)?;
    }
    while let Some(ev) = env.clock.pop() {
        if ev.time > env.time_budget {
            break;
        }
        match ev.kind {
            EventKind::JobStart => env.note_start(ev.payload),
            EventKind::UpdateArrival => {
                let m = env.complete(ev.payload)?.msg;
                let tau = version - m.s;
                let c = alpha * sfn.eval(tau);
                if interpolate {
                    for ((wi, d), ws) in w.iter_mut().zip(&m.delta).zip(&sent[m.k]) {
                        *wi = (1.0 - c) * *wi + c * (ws + d);
                    }
                } else {
                    w.iter_mut().zip(&m.delta).for_each(|(wi, d)| *wi += c * d);
                }
                check_finite(&w, "fedasync")?;
                let admitted = vec![AdmittedUpdate { k: m.k, job: m.job, s: m.s, tau, coefficient: c }];
                env.record_round(version, &w, admitted, usize::from(tau > 0), 0, None);
                version += 1;
                send(env, m.k, &w, version, steps)?;
                if interpolate {
                    sent[m.k].clone_from(&w);
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Buffers arrivals and aggregates `1 / K_buf * sum s(tau) delta` once
/// `K_buf` are present.
pub fn run_fedbuff(env: &mut Env<'_>) -> Result<()> {
    let steps = env.cfg.fedasync.num_local_steps;
    let sfn = env.cfg.fedasync.staleness_fn;
    let k_buf = env.cfg.fedbuff.k;
    if k_buf == 0 {
        return Err(Error::Input("fedbuff.K must be at least 1".into()));
    }
    let mut w = start(env);
    let mut version = 0u64;
    let mut buffer: Vec<ClientUpdateMessage> = Vec::with_capacity(k_buf);
    for k in 0..env.num_clients() {
        send(env, k, &w, version, steps)?;
    }
    while let Some(ev) = env.clock.pop() {
        if ev.time > env.time_budget {
            break;
        }
        match ev.kind {
            EventKind::JobStart => env.note_start(ev.payload),
            EventKind::UpdateArrival => {
                let m = env.complete(ev.payload)?.msg;
                let k = m.k;
                buffer.push(m);
                if buffer.len() >= k_buf {
                    let admitted = buffered_update(&mut w, &buffer, version, 1.0 / k_buf as f64, &sfn);
                    check_finite(&w, "fedbuff")?;
                    buffer.clear();
                    let deferred = stale_count(&admitted);
                    env.record_round(version, &w, admitted, deferred, 0, None);
                    version += 1;
                }
                send(env, k, &w, version, steps)?;
            }
            _ => {}
        }
    }
    env.log.pending_deferred = buffer.len();
    Ok(())
}

/// `w += scale * sum s(tau) delta` with the server version as reference.
fn buffered_update(
    w: &mut [f64],
    buffer: &[ClientUpdateMessage],
    version: u64,
    scale: f64,
    sfn: &StalenessFn,
) -> Vec<AdmittedUpdate> {
    buffer
        .iter()
        .map(|m| {
            let tau = version - m.s;
            let c = scale * sfn.eval(tau);
            w.iter_mut().zip(&m.delta).for_each(|(wi, d)| *wi += c * d);
            AdmittedUpdate { k: m.k, job: m.job, s: m.s, tau, coefficient: c }
        })
        .collect()
}

struct Compass {
    speed: Vec<Option<f64>>,
    /// Group each client's outstanding job was assigned to.
    group_of: Vec<Option<u64>>,
    group: u64,
    expected: f64,
    deadline_passed: bool,
    dispatched_at: Vec<f64>,
}

impl Compass {
    fn clamp(&self, env: &Env<'_>, steps: f64) -> u64 {
        let c = &env.cfg.compass;
        let s = if steps.is_finite() { steps.floor().max(0.0) as u64 } else { c.max_local_steps };
        s.clamp(c.min_local_steps, c.max_local_steps)
    }

    fn observe(&mut self, env: &Env<'_>, m: &ClientUpdateMessage) {
        let elapsed = m.arrival - self.dispatched_at[m.k];
        if elapsed <= 0.0 || m.steps_done == 0 {
            return;
        }
        let obs = m.steps_done as f64 / elapsed;
        let mom = env.cfg.compass.speed_momentum;
        self.speed[m.k] = Some(match self.speed[m.k] {
            Some(prior) => mom * prior + (1.0 - mom) * obs,
            None => obs,
        });
    }

    /// Opens a new group for the given idle clients and arms its deadline.
    fn open_group(&mut self, env: &mut Env<'_>, clients: &[usize], w: &[f64], version: u64) -> Result<()> {
        self.group += 1;
        self.deadline_passed = false;
        let max_steps = env.cfg.compass.max_local_steps as f64;
        let fastest = clients.iter().filter_map(|k| self.speed[*k]).fold(0.0_f64, f64::max);
        let now = env.now();
        let dt = if fastest > 0.0 { Some(max_steps / fastest) } else { None };
        self.expected = dt.map_or(f64::INFINITY, |d| now + d);
        for &k in clients {
            let steps = match (dt, self.speed[k]) {
                (Some(d), Some(v)) => self.clamp(env, d * v),
                _ => self.clamp(env, env.cfg.protocol.local_steps as f64),
            };
            self.dispatch(env, k, w, version, steps)?;
        }
        if let Some(d) = dt {
            let at = now + env.cfg.compass.latest_time_factor * d;
            env.clock.schedule(at, EventKind::Timer, 0, self.group)?;
        }
        Ok(())
    }

    fn dispatch(&mut self, env: &mut Env<'_>, k: usize, w: &[f64], version: u64, steps: u64) -> Result<()> {
        self.dispatched_at[k] = env.now();
        self.group_of[k] = Some(self.group);
        send(env, k, w, version, steps)?;
        Ok(())
    }

    fn members_outstanding(&self) -> bool {
        self.group_of.contains(&Some(self.group))
    }
}

/// Throughput-profiled groups: each group gets a step count per client so
/// that predicted finishes line up, and aggregates when every member has
/// reported or `latest_time_factor` times the expected duration has passed.
/// Speeds are measured from dispatch to arrival, so queue waiting is folded
/// into them rather than modelled.
pub fn run_fedcompass_lite(env: &mut Env<'_>) -> Result<()> {
    let cfg = &env.cfg.compass;
    if cfg.min_local_steps > cfg.max_local_steps || cfg.min_local_steps == 0 {
        return Err(Error::Input("compass step bounds must satisfy 1 <= min <= max".into()));
    }
    let (alpha, sfn) = (cfg.alpha, cfg.staleness_fn);
    let k_total = env.num_clients();
    let mut w = start(env);
    let mut version = 0u64;
    let mut buffer: Vec<ClientUpdateMessage> = Vec::new();
    let mut st = Compass {
        speed: vec![None; k_total],
        group_of: vec![None; k_total],
        group: 0,
        expected: f64::INFINITY,
        deadline_passed: false,
        dispatched_at: vec![0.0; k_total],
    };
    let all: Vec<usize> = (0..k_total).collect();
    st.open_group(env, &all, &w, version)?;

    while let Some(ev) = env.clock.pop() {
        if ev.time > env.time_budget {
            break;
        }
        let aggregate_now = match ev.kind {
            EventKind::JobStart => {
                env.note_start(ev.payload);
                false
            }
            EventKind::Timer => {
                if ev.payload == st.group {
                    st.deadline_passed = true;
                    !buffer.is_empty()
                } else {
                    false
                }
            }
            EventKind::UpdateArrival => {
                let m = env.complete(ev.payload)?.msg;
                let k = m.k;
                st.observe(env, &m);
                let own = st.group_of[k] == Some(st.group);
                st.group_of[k] = None;
                buffer.push(m);
                if own {
                    st.deadline_passed || !st.members_outstanding()
                } else {
                    // Straggler from an earlier group joins the current one.
                    let left = st.expected - env.now();
                    let steps = match st.speed[k] {
                        Some(v) if left.is_finite() => st.clamp(env, left * v),
                        _ => st.clamp(env, env.cfg.protocol.local_steps as f64),
                    };
                    st.dispatch(env, k, &w, version, steps)?;
                    st.deadline_passed
                }
            }
            EventKind::RoundBoundary => false,
        };
        if aggregate_now {
            let total: f64 = buffer.iter().map(|m| env.weights[m.k]).sum();
            let mut admitted = Vec::with_capacity(buffer.len());
            for m in &buffer {
                let tau = version - m.s;
                let c = alpha * env.weights[m.k] * sfn.eval(tau) / total;
                w.iter_mut().zip(&m.delta).for_each(|(wi, d)| *wi += c * d);
                admitted.push(AdmittedUpdate { k: m.k, job: m.job, s: m.s, tau, coefficient: c });
            }
            check_finite(&w, "fedcompass")?;
            let deferred = stale_count(&admitted);
            env.record_round(version, &w, admitted, deferred, 0, None);
            version += 1;
            buffer.clear();
            let idle: Vec<usize> = (0..k_total).filter(|k| !env.is_busy(*k)).collect();
            if idle.is_empty() {
                // Only redispatched stragglers remain; wait for all of them.
                st.deadline_passed = false;
            } else {
                st.open_group(env, &idle, &w, version)?;
            }
        }
    }
    env.log.pending_deferred = buffer.len();
    Ok(())
}
