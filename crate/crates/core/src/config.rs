//! Experiment configuration.
//!
//! Files are sectioned `key = value` text:
//!
//! ```text
//! # comments start with '#' or ';'
//! [protocol]
//! seed = 42
//! [fedqueue]
//! Tsync = 10.0
//! queue_means = 1.5,2.5,3.5,4.5
//! [async]
//! staleness_fn_kwargs = {a=1.0}
//! ```
//!
//! A key may also carry its section as a dotted prefix (`fedbuff.K = 3`,
//! `algo.name = fedavg`). Keys outside any section resolve against the
//! workload, protocol, fedqueue, ablation and metrics sections. Unknown keys
//! are rejected.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::protocol::{ClientWeightMode, DecayMode, StalenessDecay};
use crate::queue_sim::{ComputeProfile, MeanSemantics, QueueKind, QueueModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    FedQueue,
    FedAvg,
    FedAsync,
    FedBuff,
    FedCompass,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::FedQueue,
        Algorithm::FedAvg,
        Algorithm::FedAsync,
        Algorithm::FedBuff,
        Algorithm::FedCompass,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fedqueue" => Some(Algorithm::FedQueue),
            "fedavg" => Some(Algorithm::FedAvg),
            "fedasync" => Some(Algorithm::FedAsync),
            "fedbuff" => Some(Algorithm::FedBuff),
            "fedcompass" | "fedcompass-lite" | "fedcompass_lite" => Some(Algorithm::FedCompass),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::FedQueue => "fedqueue",
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedAsync => "fedasync",
            Algorithm::FedBuff => "fedbuff",
            Algorithm::FedCompass => "fedcompass",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BroadcastWhen {
    Immediate,
    NextRound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayMode {
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmissionHorizon {
    Horizon,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    Iid,
    NonIid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StalenessFnKind {
    Constant,
    Polynomial,
    Hinge,
}

/// Staleness factor `s(tau)` used by the asynchronous baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StalenessFn {
    pub kind: StalenessFnKind,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl StalenessFn {
    pub fn polynomial(a: f64) -> Self {
        StalenessFn { kind: StalenessFnKind::Polynomial, a: Some(a), b: None }
    }

    pub fn constant() -> Self {
        StalenessFn { kind: StalenessFnKind::Constant, a: None, b: None }
    }

    /// Constant: 1. Polynomial: `(1 + tau)^-a` (a defaults to 0.5).
    /// Hinge: 1 up to `b`, then `1 / (a (tau - b) + 1)` (defaults a=10, b=4).
    pub fn eval(&self, tau: u64) -> f64 {
        let t = tau as f64;
        match self.kind {
            StalenessFnKind::Constant => 1.0,
            StalenessFnKind::Polynomial => (1.0 + t).powf(-self.a.unwrap_or(0.5)),
            StalenessFnKind::Hinge => {
                let a = self.a.unwrap_or(10.0);
                let b = self.b.unwrap_or(4.0);
                if t <= b {
                    1.0
                } else {
                    1.0 / (a * (t - b) + 1.0)
                }
            }
        }
    }

    fn kind_str(&self) -> &'static str {
        match self.kind {
            StalenessFnKind::Constant => "constant",
            StalenessFnKind::Polynomial => "polynomial",
            StalenessFnKind::Hinge => "hinge",
        }
    }

    fn kwargs_str(&self) -> String {
        let mut parts = Vec::new();
        if let Some(a) = self.a {
            parts.push(format!("a={a:?}"));
        }
        if let Some(b) = self.b {
            parts.push(format!("b={b:?}"));
        }
        format!("{{{}}}", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub dataset: DatasetKind,
    pub partition: PartitionKind,
    pub data_alpha: f64,
    pub model: ModelKind,
    pub hidden: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub class_sep: f64,
    pub quad_dim: usize,
    pub quad_mu: f64,
    pub quad_l: f64,
    pub quad_spread: f64,
    pub quad_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub num_clients: usize,
    pub num_rounds: u64,
    pub batch_size: usize,
    pub local_steps: u64,
    /// Virtual seconds every method may run; 0 means `num_rounds * Tsync`.
    pub time_budget: f64,
    /// Steps per second per client at slowdown 1.
    pub throughput: Vec<f64>,
    pub compute_jitter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedQueueConfig {
    pub broadcast_when: BroadcastWhen,
    pub delay_mode: DelayMode,
    pub t_sync: f64,
    pub q_init: f64,
    pub gamma: f64,
    pub delta: f64,
    pub alpha: f64,
    pub warmup_steps: u64,
    pub sim_queue: QueueKind,
    pub queue_fixed: Vec<f64>,
    pub queue_means: Vec<f64>,
    pub queue_rho: f64,
    pub queue_corr: f64,
    pub queue_mean_semantics: MeanSemantics,
    pub slowdown: Vec<f64>,
    pub staleness_mode: DecayMode,
    pub staleness_beta: f64,
    pub admission_horizon: AdmissionHorizon,
    pub client_weight_mode: ClientWeightMode,
    pub lr_base: f64,
    pub e_floor: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedAvgConfig {
    /// Empty means `local_steps` for every client.
    pub num_local_steps: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsyncConfig {
    pub num_local_steps: u64,
    pub staleness_fn: StalenessFn,
    pub alpha: f64,
    pub optimize_memory: bool,
    pub mixing: AsyncMixing,
}

/// How an asynchronous arrival is folded into the global model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsyncMixing {
    /// `w += alpha * s(tau) * delta`
    Delta,
    /// `w = (1 - a) w + a (w_s + delta)` with `a = alpha * s(tau)`
    Interpolate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedBuffConfig {
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompassConfig {
    pub staleness_fn: StalenessFn,
    pub alpha: f64,
    pub max_local_steps: u64,
    pub min_local_steps: u64,
    pub speed_momentum: f64,
    pub latest_time_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub use_ewma: bool,
    pub use_staleness_decay: bool,
    pub use_inverse_lr: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferCounting {
    /// Two transfers per dispatch: model down, update up.
    PerDispatch,
    /// Downloads and uploads counted separately as they happen.
    PerDirection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub target_accuracy: f64,
    /// Loss target for objectives without accuracy; 0 disables.
    pub target_loss: f64,
    pub transfer_counting: TransferCounting,
    /// Drop prediction errors beyond this many standard deviations; 0 = off.
    pub outlier_sigma: f64,
    pub write_events: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub workload: WorkloadConfig,
    pub protocol: ProtocolConfig,
    pub fedqueue: FedQueueConfig,
    pub fedavg: FedAvgConfig,
    pub fedasync: AsyncConfig,
    pub fedbuff: FedBuffConfig,
    pub compass: CompassConfig,
    pub ablation: AblationConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            workload: WorkloadConfig {
                dataset: DatasetKind::Synthetic,
                partition: PartitionKind::NonIid,
                data_alpha: 0.5,
                model: ModelKind::Linear,
                hidden: 32,
                num_features: 20,
                num_classes: 10,
                train_samples: 4000,
                test_samples: 2000,
                class_sep: 0.5,
                quad_dim: 10,
                quad_mu: 0.5,
                quad_l: 2.0,
                quad_spread: 1.0,
                quad_sigma: 0.0,
            },
            protocol: ProtocolConfig {
                algorithm: Algorithm::FedQueue,
                seed: 42,
                num_clients: 4,
                num_rounds: 50,
                batch_size: 64,
                local_steps: 100,
                time_budget: 0.0,
                throughput: vec![10.0; 4],
                compute_jitter: 0.0,
            },
            fedqueue: FedQueueConfig {
                broadcast_when: BroadcastWhen::NextRound,
                delay_mode: DelayMode::Simulate,
                t_sync: 10.0,
                q_init: 2.0,
                gamma: 0.2,
                delta: 2.0,
                alpha: 0.5,
                warmup_steps: 10,
                sim_queue: QueueKind::Lognormal,
                queue_fixed: vec![0.5, 1.5, 2.4, 6.0],
                queue_means: vec![1.5, 2.5, 3.5, 4.5],
                queue_rho: 0.4,
                queue_corr: 0.0,
                queue_mean_semantics: MeanSemantics::Median,
                slowdown: vec![1.0; 4],
                staleness_mode: DecayMode::Harmonic,
                staleness_beta: 0.5,
                admission_horizon: AdmissionHorizon::Horizon,
                client_weight_mode: ClientWeightMode::Equal,
                lr_base: 0.003,
                e_floor: 1,
            },
            fedavg: FedAvgConfig { num_local_steps: vec![67, 155, 147, 15] },
            fedasync: AsyncConfig {
                num_local_steps: 155,
                staleness_fn: StalenessFn::polynomial(1.0),
                alpha: 0.5,
                optimize_memory: true,
                mixing: AsyncMixing::Interpolate,
            },
            fedbuff: FedBuffConfig { k: 3 },
            compass: CompassConfig {
                staleness_fn: StalenessFn { kind: StalenessFnKind::Polynomial, a: None, b: None },
                alpha: 0.5,
                max_local_steps: 200,
                min_local_steps: 20,
                speed_momentum: 0.6,
                latest_time_factor: 1.1,
            },
            ablation: AblationConfig {
                use_ewma: true,
                use_staleness_decay: true,
                use_inverse_lr: true,
            },
            metrics: MetricsConfig {
                target_accuracy: 0.95,
                target_loss: 0.0,
                transfer_counting: TransferCounting::PerDispatch,
                outlier_sigma: 0.0,
                write_events: true,
            },
        }
    }
}

const SECTIONS: [&str; 9] = [
    "workload", "protocol", "fedqueue", "fedavg", "async", "fedbuff", "compass", "ablation", "metrics",
];

/// Sections searched for keys written without a section.
const BARE_SECTIONS: [&str; 5] = ["workload", "protocol", "fedqueue", "ablation", "metrics"];

/// Every accepted key, as `(section, canonical name, aliases)`.
const KEYS: &[(&str, &str, &[&str])] = &[
    ("workload", "dataset", &[]),
    ("workload", "partition", &[]),
    ("workload", "data.alpha", &["data_alpha"]),
    ("workload", "model", &[]),
    ("workload", "hidden", &[]),
    ("workload", "num_features", &[]),
    ("workload", "num_classes", &[]),
    ("workload", "train_samples", &[]),
    ("workload", "test_samples", &[]),
    ("workload", "class_sep", &[]),
    ("workload", "quad.dim", &[]),
    ("workload", "quad.mu", &[]),
    ("workload", "quad.L", &[]),
    ("workload", "quad.spread", &[]),
    ("workload", "quad.sigma", &[]),
    ("protocol", "algo.name", &["algorithm"]),
    ("protocol", "seed", &[]),
    ("protocol", "num_clients", &[]),
    ("protocol", "num_rounds", &[]),
    ("protocol", "batch_size", &[]),
    ("protocol", "optimizer", &[]),
    ("protocol", "local_steps", &[]),
    ("protocol", "time_budget", &[]),
    ("protocol", "throughput", &[]),
    ("protocol", "compute_jitter", &[]),
    ("fedqueue", "algo.broadcast_when", &["broadcast_when"]),
    ("fedqueue", "algo.delay_mode", &["delay_mode"]),
    ("fedqueue", "Tsync", &[]),
    ("fedqueue", "q_init", &[]),
    ("fedqueue", "gamma", &[]),
    ("fedqueue", "delta", &[]),
    ("fedqueue", "alpha", &[]),
    ("fedqueue", "warmup_steps", &[]),
    ("fedqueue", "sim_queue", &[]),
    ("fedqueue", "queue_fixed", &[]),
    ("fedqueue", "queue_means", &[]),
    ("fedqueue", "queue_rho", &["rho"]),
    ("fedqueue", "queue_corr", &[]),
    ("fedqueue", "queue_mean_semantics", &[]),
    ("fedqueue", "slowdown", &[]),
    ("fedqueue", "staleness_mode", &[]),
    ("fedqueue", "staleness_beta", &[]),
    ("fedqueue", "admission_horizon", &[]),
    ("fedqueue", "client_weight_mode", &[]),
    ("fedqueue", "lr_base", &[]),
    ("fedqueue", "E_floor", &[]),
    ("fedavg", "num_local_steps", &[]),
    ("async", "num_local_steps", &[]),
    ("async", "staleness_fn", &[]),
    ("async", "staleness_fn_kwargs", &[]),
    ("async", "alpha", &[]),
    ("async", "optimize_memory", &[]),
    ("async", "mixing", &[]),
    ("fedbuff", "K", &[]),
    ("compass", "staleness_fn", &[]),
    ("compass", "staleness_fn_kwargs", &[]),
    ("compass", "alpha", &[]),
    ("compass", "max_local_steps", &[]),
    ("compass", "min_local_steps", &[]),
    ("compass", "speed_momentum", &[]),
    ("compass", "latest_time_factor", &[]),
    ("ablation", "use_ewma", &[]),
    ("ablation", "use_staleness_decay", &[]),
    ("ablation", "use_inverse_lr", &[]),
    ("metrics", "target_accuracy", &[]),
    ("metrics", "target_loss", &[]),
    ("metrics", "transfer_counting", &[]),
    ("metrics", "outlier_sigma", &[]),
    ("metrics", "write_events", &[]),
];

fn lookup_in(section: &str, key: &str) -> Option<String> {
    KEYS.iter()
        .find(|(s, k, aliases)| *s == section && (*k == key || aliases.contains(&key)))
        .map(|(s, k, _)| format!("{s}.{k}"))
}

/// Resolves a key as written in a file or on the command line to its
/// canonical `section.name` form.
pub fn resolve_key(section: Option<&str>, key: &str) -> Option<String> {
    if let Some(s) = section {
        if let Some(found) = lookup_in(s, key) {
            return Some(found);
        }
    }
    // Dotted prefix naming a section, e.g. `fedbuff.K` or `compass.alpha`.
    if let Some((prefix, rest)) = key.split_once('.') {
        let prefix = if prefix == "fedasync" { "async" } else { prefix };
        if SECTIONS.contains(&prefix) {
            if let Some(found) = lookup_in(prefix, rest) {
                return Some(found);
            }
        }
    }
    if section.is_none() || section == Some("fedqueue") {
        // Table 5 lists `fedavg.num_local_steps` among the orchestration knobs.
        if key == "fedavg.num_local_steps" {
            return Some("fedavg.num_local_steps".into());
        }
    }
    if section.is_none() {
        for s in BARE_SECTIONS {
            if let Some(found) = lookup_in(s, key) {
                return Some(found);
            }
        }
    }
    None
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::config(key, format!("expected a number, got '{v}'")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.trim()
        .parse::<u64>()
        .map_err(|_| Error::config(key, format!("expected a nonnegative integer, got '{v}'")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    parse_u64(key, v).map(|x| x as usize)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("expected true/false, got '{v}'"))),
    }
}

fn parse_list_f64(key: &str, v: &str) -> Result<Vec<f64>> {
    let v = v.trim();
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse_f64(key, x)).collect()
}

fn parse_list_u64(key: &str, v: &str) -> Result<Vec<u64>> {
    let v = v.trim();
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse_u64(key, x)).collect()
}

fn parse_kwargs(key: &str, v: &str, into: &mut StalenessFn) -> Result<()> {
    let inner = v.trim().trim_start_matches('{').trim_end_matches('}').trim();
    into.a = None;
    into.b = None;
    if inner.is_empty() {
        return Ok(());
    }
    for part in inner.split(',') {
        let (name, val) = part
            .split_once('=')
            .or_else(|| part.split_once(':'))
            .ok_or_else(|| Error::config(key, format!("expected name=value, got '{part}'")))?;
        let val = parse_f64(key, val)?;
        match name.trim().trim_matches('"').trim_matches('\'') {
            "a" => into.a = Some(val),
            "b" => into.b = Some(val),
            other => return Err(Error::config(key, format!("unknown staleness argument '{other}'"))),
        }
    }
    Ok(())
}

fn parse_staleness_kind(key: &str, v: &str) -> Result<StalenessFnKind> {
    match v.trim() {
        "constant" => Ok(StalenessFnKind::Constant),
        "polynomial" => Ok(StalenessFnKind::Polynomial),
        "hinge" => Ok(StalenessFnKind::Hinge),
        other => Err(Error::config(key, format!("unknown staleness_fn '{other}'"))),
    }
}

fn join<T: std::fmt::Debug>(xs: &[T]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Sets one canonical key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let w = &mut self.workload;
        let p = &mut self.protocol;
        let f = &mut self.fedqueue;
        match key {
            "workload.dataset" => {
                w.dataset = match v {
                    "synthetic" | "synthetic_classify" | "classify" => DatasetKind::Synthetic,
                    "quadratic" => DatasetKind::Quadratic,
                    _ => return Err(Error::config("dataset", format!("unknown dataset '{v}'"))),
                }
            }
            "workload.partition" => {
                w.partition = match v {
                    "iid" => PartitionKind::Iid,
                    "non-iid" | "noniid" | "non_iid" | "dirichlet" => PartitionKind::NonIid,
                    _ => return Err(Error::config("partition", format!("unknown partition '{v}'"))),
                }
            }
            "workload.data.alpha" => w.data_alpha = parse_f64("data.alpha", v)?,
            "workload.model" => {
                w.model = match v {
                    "linear" => ModelKind::Linear,
                    "mlp" => ModelKind::Mlp,
                    _ => return Err(Error::config("model", format!("unknown model '{v}'"))),
                }
            }
            "workload.hidden" => w.hidden = parse_usize("hidden", v)?,
            "workload.num_features" => w.num_features = parse_usize("num_features", v)?,
            "workload.num_classes" => w.num_classes = parse_usize("num_classes", v)?,
            "workload.train_samples" => w.train_samples = parse_usize("train_samples", v)?,
            "workload.test_samples" => w.test_samples = parse_usize("test_samples", v)?,
            "workload.class_sep" => w.class_sep = parse_f64("class_sep", v)?,
            "workload.quad.dim" => w.quad_dim = parse_usize("quad.dim", v)?,
            "workload.quad.mu" => w.quad_mu = parse_f64("quad.mu", v)?,
            "workload.quad.L" => w.quad_l = parse_f64("quad.L", v)?,
            "workload.quad.spread" => w.quad_spread = parse_f64("quad.spread", v)?,
            "workload.quad.sigma" => w.quad_sigma = parse_f64("quad.sigma", v)?,
            "protocol.algo.name" => {
                p.algorithm = Algorithm::parse(v)
                    .ok_or_else(|| Error::config("algo.name", format!("unknown algorithm '{v}'")))?
            }
            "protocol.seed" => p.seed = parse_u64("seed", v)?,
            "protocol.num_clients" => p.num_clients = parse_usize("num_clients", v)?,
            "protocol.num_rounds" => p.num_rounds = parse_u64("num_rounds", v)?,
            "protocol.batch_size" => p.batch_size = parse_usize("batch_size", v)?,
            "protocol.optimizer" => {
                if !v.eq_ignore_ascii_case("sgd") {
                    return Err(Error::config("optimizer", format!("only sgd is available, got '{v}'")));
                }
            }
            "protocol.local_steps" => p.local_steps = parse_u64("local_steps", v)?,
            "protocol.time_budget" => p.time_budget = parse_f64("time_budget", v)?,
            "protocol.throughput" => p.throughput = parse_list_f64("throughput", v)?,
            "protocol.compute_jitter" => p.compute_jitter = parse_f64("compute_jitter", v)?,
            "fedqueue.algo.broadcast_when" => {
                f.broadcast_when = match v {
                    "immediate" => BroadcastWhen::Immediate,
                    "next_round" => BroadcastWhen::NextRound,
                    _ => return Err(Error::config("broadcast_when", format!("unknown policy '{v}'"))),
                }
            }
            "fedqueue.algo.delay_mode" => match v {
                "simulate" => f.delay_mode = DelayMode::Simulate,
                "sleep" => {
                    return Err(Error::config("delay_mode", "wall-clock sleeping is not supported; use simulate"))
                }
                _ => return Err(Error::config("delay_mode", format!("unknown mode '{v}'"))),
            },
            "fedqueue.Tsync" => f.t_sync = parse_f64("Tsync", v)?,
            "fedqueue.q_init" => f.q_init = parse_f64("q_init", v)?,
            "fedqueue.gamma" => f.gamma = parse_f64("gamma", v)?,
            "fedqueue.delta" => f.delta = parse_f64("delta", v)?,
            "fedqueue.alpha" => f.alpha = parse_f64("alpha", v)?,
            "fedqueue.warmup_steps" => f.warmup_steps = parse_u64("warmup_steps", v)?,
            "fedqueue.sim_queue" => {
                f.sim_queue = QueueKind::parse(v)
                    .ok_or_else(|| Error::config("sim_queue", format!("unknown queue model '{v}'")))?
            }
            "fedqueue.queue_fixed" => f.queue_fixed = parse_list_f64("queue_fixed", v)?,
            "fedqueue.queue_means" => f.queue_means = parse_list_f64("queue_means", v)?,
            "fedqueue.queue_rho" => f.queue_rho = parse_f64("queue_rho", v)?,
            "fedqueue.queue_corr" => f.queue_corr = parse_f64("queue_corr", v)?,
            "fedqueue.queue_mean_semantics" => {
                f.queue_mean_semantics = MeanSemantics::parse(v).ok_or_else(|| {
                    Error::config("queue_mean_semantics", format!("expected median or mean, got '{v}'"))
                })?
            }
            "fedqueue.slowdown" => f.slowdown = parse_list_f64("slowdown", v)?,
            "fedqueue.staleness_mode" => {
                f.staleness_mode = match v {
                    "exp" => DecayMode::Exponential,
                    _ => DecayMode::parse(v).ok_or_else(|| {
                        Error::config("staleness_mode", format!("unknown decay '{v}'"))
                    })?,
                }
            }
            "fedqueue.staleness_beta" => f.staleness_beta = parse_f64("staleness_beta", v)?,
            "fedqueue.admission_horizon" => {
                f.admission_horizon = match v {
                    "horizon" => AdmissionHorizon::Horizon,
                    "all" => AdmissionHorizon::All,
                    _ => return Err(Error::config("admission_horizon", format!("unknown policy '{v}'"))),
                }
            }
            "fedqueue.client_weight_mode" => {
                f.client_weight_mode = ClientWeightMode::parse(v).ok_or_else(|| {
                    Error::config("client_weight_mode", format!("unknown mode '{v}'"))
                })?
            }
            "fedqueue.lr_base" => f.lr_base = parse_f64("lr_base", v)?,
            "fedqueue.E_floor" => f.e_floor = parse_u64("E_floor", v)?,
            "fedavg.num_local_steps" => {
                self.fedavg.num_local_steps = parse_list_u64("fedavg.num_local_steps", v)?
            }
            "async.num_local_steps" => self.fedasync.num_local_steps = parse_u64("num_local_steps", v)?,
            "async.staleness_fn" => self.fedasync.staleness_fn.kind = parse_staleness_kind("staleness_fn", v)?,
            "async.staleness_fn_kwargs" => {
                parse_kwargs("staleness_fn_kwargs", v, &mut self.fedasync.staleness_fn)?
            }
            "async.alpha" => self.fedasync.alpha = parse_f64("async.alpha", v)?,
            "async.optimize_memory" => self.fedasync.optimize_memory = parse_bool("optimize_memory", v)?,
            "async.mixing" => {
                self.fedasync.mixing = match v {
                    "delta" => AsyncMixing::Delta,
                    "interpolate" => AsyncMixing::Interpolate,
                    _ => return Err(Error::config("mixing", format!("expected delta or interpolate, got '{v}'"))),
                }
            }
            "fedbuff.K" => self.fedbuff.k = parse_usize("K", v)?,
            "compass.staleness_fn" => self.compass.staleness_fn.kind = parse_staleness_kind("staleness_fn", v)?,
            "compass.staleness_fn_kwargs" => {
                parse_kwargs("staleness_fn_kwargs", v, &mut self.compass.staleness_fn)?
            }
            "compass.alpha" => self.compass.alpha = parse_f64("compass.alpha", v)?,
            "compass.max_local_steps" => self.compass.max_local_steps = parse_u64("max_local_steps", v)?,
            "compass.min_local_steps" => self.compass.min_local_steps = parse_u64("min_local_steps", v)?,
            "compass.speed_momentum" => self.compass.speed_momentum = parse_f64("speed_momentum", v)?,
            "compass.latest_time_factor" => {
                self.compass.latest_time_factor = parse_f64("latest_time_factor", v)?
            }
            "ablation.use_ewma" => self.ablation.use_ewma = parse_bool("use_ewma", v)?,
            "ablation.use_staleness_decay" => {
                self.ablation.use_staleness_decay = parse_bool("use_staleness_decay", v)?
            }
            "ablation.use_inverse_lr" => self.ablation.use_inverse_lr = parse_bool("use_inverse_lr", v)?,
            "metrics.target_accuracy" => self.metrics.target_accuracy = parse_f64("target_accuracy", v)?,
            "metrics.target_loss" => self.metrics.target_loss = parse_f64("target_loss", v)?,
            "metrics.transfer_counting" => {
                self.metrics.transfer_counting = match v {
                    "per_dispatch" => TransferCounting::PerDispatch,
                    "per_direction" => TransferCounting::PerDirection,
                    _ => return Err(Error::config("transfer_counting", format!("unknown convention '{v}'"))),
                }
            }
            "metrics.outlier_sigma" => self.metrics.outlier_sigma = parse_f64("outlier_sigma", v)?,
            "metrics.write_events" => self.metrics.write_events = parse_bool("write_events", v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Textual value of one canonical key, in the form `set` accepts.
    pub fn get(&self, key: &str) -> Result<String> {
        let w = &self.workload;
        let p = &self.protocol;
        let f = &self.fedqueue;
        Ok(match key {
            "workload.dataset" => match w.dataset {
                DatasetKind::Synthetic => "synthetic".into(),
                DatasetKind::Quadratic => "quadratic".into(),
            },
            "workload.partition" => match w.partition {
                PartitionKind::Iid => "iid".into(),
                PartitionKind::NonIid => "non-iid".into(),
            },
            "workload.data.alpha" => format!("{:?}", w.data_alpha),
            "workload.model" => match w.model {
                ModelKind::Linear => "linear".into(),
                ModelKind::Mlp => "mlp".into(),
            },
            "workload.hidden" => w.hidden.to_string(),
            "workload.num_features" => w.num_features.to_string(),
            "workload.num_classes" => w.num_classes.to_string(),
            "workload.train_samples" => w.train_samples.to_string(),
            "workload.test_samples" => w.test_samples.to_string(),
            "workload.class_sep" => format!("{:?}", w.class_sep),
            "workload.quad.dim" => w.quad_dim.to_string(),
            "workload.quad.mu" => format!("{:?}", w.quad_mu),
            "workload.quad.L" => format!("{:?}", w.quad_l),
            "workload.quad.spread" => format!("{:?}", w.quad_spread),
            "workload.quad.sigma" => format!("{:?}", w.quad_sigma),
            "protocol.algo.name" => p.algorithm.as_str().into(),
            "protocol.seed" => p.seed.to_string(),
            "protocol.num_clients" => p.num_clients.to_string(),
            "protocol.num_rounds" => p.num_rounds.to_string(),
            "protocol.batch_size" => p.batch_size.to_string(),
            "protocol.optimizer" => "sgd".into(),
            "protocol.local_steps" => p.local_steps.to_string(),
            "protocol.time_budget" => format!("{:?}", p.time_budget),
            "protocol.throughput" => join(&p.throughput),
            "protocol.compute_jitter" => format!("{:?}", p.compute_jitter),
            "fedqueue.algo.broadcast_when" => match f.broadcast_when {
                BroadcastWhen::Immediate => "immediate".into(),
                BroadcastWhen::NextRound => "next_round".into(),
            },
            "fedqueue.algo.delay_mode" => "simulate".into(),
            "fedqueue.Tsync" => format!("{:?}", f.t_sync),
            "fedqueue.q_init" => format!("{:?}", f.q_init),
            "fedqueue.gamma" => format!("{:?}", f.gamma),
            "fedqueue.delta" => format!("{:?}", f.delta),
            "fedqueue.alpha" => format!("{:?}", f.alpha),
            "fedqueue.warmup_steps" => f.warmup_steps.to_string(),
            "fedqueue.sim_queue" => f.sim_queue.as_str().into(),
            "fedqueue.queue_fixed" => join(&f.queue_fixed),
            "fedqueue.queue_means" => join(&f.queue_means),
            "fedqueue.queue_rho" => format!("{:?}", f.queue_rho),
            "fedqueue.queue_corr" => format!("{:?}", f.queue_corr),
            "fedqueue.queue_mean_semantics" => f.queue_mean_semantics.as_str().into(),
            "fedqueue.slowdown" => join(&f.slowdown),
            "fedqueue.staleness_mode" => f.staleness_mode.as_str().into(),
            "fedqueue.staleness_beta" => format!("{:?}", f.staleness_beta),
            "fedqueue.admission_horizon" => match f.admission_horizon {
                AdmissionHorizon::Horizon => "horizon".into(),
                AdmissionHorizon::All => "all".into(),
            },
            "fedqueue.client_weight_mode" => f.client_weight_mode.as_str().into(),
            "fedqueue.lr_base" => format!("{:?}", f.lr_base),
            "fedqueue.E_floor" => f.e_floor.to_string(),
            "fedavg.num_local_steps" => join(&self.fedavg.num_local_steps),
            "async.num_local_steps" => self.fedasync.num_local_steps.to_string(),
            "async.staleness_fn" => self.fedasync.staleness_fn.kind_str().into(),
            "async.staleness_fn_kwargs" => self.fedasync.staleness_fn.kwargs_str(),
            "async.alpha" => format!("{:?}", self.fedasync.alpha),
            "async.optimize_memory" => self.fedasync.optimize_memory.to_string(),
            "async.mixing" => match self.fedasync.mixing {
                AsyncMixing::Delta => "delta".into(),
                AsyncMixing::Interpolate => "interpolate".into(),
            },
            "fedbuff.K" => self.fedbuff.k.to_string(),
            "compass.staleness_fn" => self.compass.staleness_fn.kind_str().into(),
            "compass.staleness_fn_kwargs" => self.compass.staleness_fn.kwargs_str(),
            "compass.alpha" => format!("{:?}", self.compass.alpha),
            "compass.max_local_steps" => self.compass.max_local_steps.to_string(),
            "compass.min_local_steps" => self.compass.min_local_steps.to_string(),
            "compass.speed_momentum" => format!("{:?}", self.compass.speed_momentum),
            "compass.latest_time_factor" => format!("{:?}", self.compass.latest_time_factor),
            "ablation.use_ewma" => self.ablation.use_ewma.to_string(),
            "ablation.use_staleness_decay" => self.ablation.use_staleness_decay.to_string(),
            "ablation.use_inverse_lr" => self.ablation.use_inverse_lr.to_string(),
            "metrics.target_accuracy" => format!("{:?}", self.metrics.target_accuracy),
            "metrics.target_loss" => format!("{:?}", self.metrics.target_loss),
            "metrics.transfer_counting" => match self.metrics.transfer_counting {
                TransferCounting::PerDispatch => "per_dispatch".into(),
                TransferCounting::PerDirection => "per_direction".into(),
            },
            "metrics.outlier_sigma" => format!("{:?}", self.metrics.outlier_sigma),
            "metrics.write_events" => self.metrics.write_events.to_string(),
            _ => return Err(Error::config(key, "unknown key")),
        })
    }

    /// Sets a key given in any accepted spelling (`rho`, `fedbuff.K`, ...).
    pub fn set_by_name(&mut self, name: &str, value: &str) -> Result<()> {
        let key = resolve_key(None, name).ok_or_else(|| Error::config(name, "unknown key"))?;
        self.set(&key, value)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Config {
                    key: line.to_string(),
                    line: line_no,
                    message: "unterminated section header".into(),
                })?;
                let name = name.trim();
                let name = match name {
                    "algo" => "fedqueue",
                    "fedasync" => "async",
                    "fedcompass" => "compass",
                    other => other,
                };
                if !SECTIONS.contains(&name) {
                    return Err(Error::Config {
                        key: name.to_string(),
                        line: line_no,
                        message: "unknown section".into(),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                line: line_no,
                message: "expected 'key = value'".into(),
            })?;
            let key = key.trim();
            let value = strip_inline_comment(value);
            let canonical = resolve_key(section.as_deref(), key).ok_or_else(|| Error::Config {
                key: key.to_string(),
                line: line_no,
                message: "unknown key".into(),
            })?;
            cfg.set(&canonical, value).map_err(|e| with_line(e, key, line_no))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Complete textual form; `parse_str(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for section in SECTIONS {
            let _ = writeln!(out, "[{section}]");
            for (s, k, _) in KEYS.iter().filter(|(s, _, _)| *s == section) {
                let value = self.get(&format!("{s}.{k}")).expect("every listed key has a getter");
                let _ = writeln!(out, "{k} = {value}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn time_budget(&self) -> f64 {
        if self.protocol.time_budget > 0.0 {
            self.protocol.time_budget
        } else {
            self.protocol.num_rounds as f64 * self.fedqueue.t_sync
        }
    }

    pub fn queue_model(&self) -> Result<QueueModel> {
        let f = &self.fedqueue;
        let model = QueueModel {
            kind: f.sim_queue,
            fixed_delays: f.queue_fixed.clone(),
            means: f.queue_means.clone(),
            rho: f.queue_rho,
            persistence: f.queue_corr,
            semantics: f.queue_mean_semantics,
        };
        model.validate(self.protocol.num_clients)?;
        Ok(model)
    }

    pub fn compute_profile(&self) -> Result<ComputeProfile> {
        let profile = ComputeProfile {
            throughput: self.protocol.throughput.clone(),
            slowdown: self.fedqueue.slowdown.clone(),
            jitter: self.protocol.compute_jitter,
        };
        profile.validate(self.protocol.num_clients)?;
        Ok(profile)
    }

    /// Aggregation decay, `phi == 1` when the ablation disables it.
    pub fn staleness_decay(&self) -> StalenessDecay {
        if self.ablation.use_staleness_decay {
            StalenessDecay { mode: self.fedqueue.staleness_mode, beta: self.fedqueue.staleness_beta }
        } else {
            StalenessDecay::flat()
        }
    }

    pub fn fedavg_steps(&self) -> Vec<u64> {
        if self.fedavg.num_local_steps.is_empty() {
            vec![self.protocol.local_steps; self.protocol.num_clients]
        } else {
            self.fedavg.num_local_steps.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.protocol.num_clients;
        let w = &self.workload;
        let p = &self.protocol;
        let f = &self.fedqueue;
        if k == 0 {
            return Err(Error::config("num_clients", "must be >= 1"));
        }
        if p.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(p.time_budget.is_finite() && p.time_budget >= 0.0) {
            return Err(Error::config("time_budget", "must be >= 0"));
        }
        if !(w.data_alpha > 0.0 && w.data_alpha.is_finite()) {
            return Err(Error::config("data.alpha", "must be > 0"));
        }
        match w.dataset {
            DatasetKind::Synthetic => {
                if w.num_features == 0 || w.num_classes < 2 {
                    return Err(Error::config("num_classes", "need >= 1 feature and >= 2 classes"));
                }
                if w.train_samples < k {
                    return Err(Error::config("train_samples", "fewer samples than clients"));
                }
                if w.test_samples == 0 {
                    return Err(Error::config("test_samples", "must be >= 1"));
                }
                if w.model == ModelKind::Mlp && w.hidden == 0 {
                    return Err(Error::config("hidden", "mlp needs a hidden width >= 1"));
                }
            }
            DatasetKind::Quadratic => {
                if w.quad_dim == 0 {
                    return Err(Error::config("quad.dim", "must be >= 1"));
                }
                if !(w.quad_mu >= 0.0 && w.quad_l >= w.quad_mu && w.quad_l > 0.0) {
                    return Err(Error::config("quad.L", "need 0 <= quad.mu <= quad.L, quad.L > 0"));
                }
                if !(w.quad_spread >= 0.0 && w.quad_sigma >= 0.0) {
                    return Err(Error::config("quad.sigma", "spread and sigma must be >= 0"));
                }
            }
        }
        if !(f.t_sync > 0.0 && f.t_sync.is_finite()) {
            return Err(Error::config("Tsync", "must be > 0"));
        }
        if !(f.q_init >= 0.0 && f.q_init.is_finite()) {
            return Err(Error::config("q_init", "must be >= 0"));
        }
        if !(f.gamma >= 0.0 && f.gamma.is_finite()) {
            return Err(Error::config("gamma", "must be >= 0"));
        }
        if !(f.delta >= 0.0 && f.delta.is_finite()) {
            return Err(Error::config("delta", "must be >= 0"));
        }
        if !(f.alpha > 0.0 && f.alpha <= 1.0) {
            return Err(Error::config("alpha", "EWMA rate must lie in (0, 1]"));
        }
        if !(f.staleness_beta >= 0.0 && f.staleness_beta.is_finite()) {
            return Err(Error::config("staleness_beta", "must be >= 0"));
        }
        if !(f.lr_base > 0.0 && f.lr_base.is_finite()) {
            return Err(Error::config("lr_base", "must be > 0"));
        }
        if f.e_floor == 0 {
            return Err(Error::config("E_floor", "must be >= 1 so learning-rate scaling is defined"));
        }
        self.queue_model()?;
        self.compute_profile()?;
        if self.fedavg.num_local_steps.len() != k && !self.fedavg.num_local_steps.is_empty() {
            return Err(Error::config(
                "fedavg.num_local_steps",
                format!("expected {k} values, got {}", self.fedavg.num_local_steps.len()),
            ));
        }
        let a = &self.fedasync;
        if !(a.alpha > 0.0 && a.alpha <= 1.0) {
            return Err(Error::config("async.alpha", "must lie in (0, 1]"));
        }
        if a.num_local_steps == 0 {
            return Err(Error::config("async.num_local_steps", "must be >= 1"));
        }
        if self.fedbuff.k == 0 {
            return Err(Error::config("fedbuff.K", "must be >= 1"));
        }
        let c = &self.compass;
        if !(c.alpha > 0.0 && c.alpha <= 1.0) {
            return Err(Error::config("compass.alpha", "must lie in (0, 1]"));
        }
        if c.min_local_steps == 0 || c.min_local_steps > c.max_local_steps {
            return Err(Error::config("min_local_steps", "need 1 <= min_local_steps <= max_local_steps"));
        }
        if !(0.0..1.0).contains(&c.speed_momentum) {
            return Err(Error::config("speed_momentum", "must lie in [0, 1)"));
        }
        if !(c.latest_time_factor >= 1.0 && c.latest_time_factor.is_finite()) {
            return Err(Error::config("latest_time_factor", "must be >= 1"));
        }
        let m = &self.metrics;
        if !(0.0..=1.0).contains(&m.target_accuracy) {
            return Err(Error::config("target_accuracy", "must lie in [0, 1]"));
        }
        if !(m.target_loss >= 0.0 && m.outlier_sigma >= 0.0) {
            return Err(Error::config("target_loss", "targets and outlier_sigma must be >= 0"));
        }
        Ok(())
    }
}

fn strip_inline_comment(value: &str) -> &str {
    match value.find(" #") {
        Some(i) => value[..i].trim(),
        None => value.trim(),
    }
}

fn with_line(err: Error, key: &str, line: usize) -> Error {
    match err {
        Error::Config { message, .. } => Error::Config { key: key.to_string(), line, message },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::parse_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.fedqueue.t_sync, 10.0);
        assert_eq!(c.fedqueue.delta, 2.0);
        assert_eq!(c.fedqueue.alpha, 0.5);
        assert_eq!(c.fedqueue.gamma, 0.2);
        assert_eq!(c.protocol.num_rounds, 50);
        assert_eq!(c.fedqueue.lr_base, 0.003);
        assert_eq!(c.protocol.seed, 42);
        assert_eq!(c.fedavg.num_local_steps, vec![67, 155, 147, 15]);
        assert_eq!(c.fedasync.staleness_fn.eval(3), 0.25);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let err = ExperimentConfig::parse_str("[fedqueue]\nqueue_means = 1.5,2.5,3.5\n").unwrap_err();
        assert!(err.to_string().contains("queue_means"), "{err}");
    }

    #[test]
    fn unknown_key_names_line() {
        let err = ExperimentConfig::parse_str("[fedqueue]\nTsync = 10\nq_intt = 2.0\n").unwrap_err();
        match err {
            Error::Config { key, line, .. } => {
                assert_eq!(key, "q_intt");
                assert_eq!(line, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_value_names_key_and_line() {
        let err = ExperimentConfig::parse_str("\n[fedqueue]\ndelta = two\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, line: 3, .. } if key == "delta"), "{err:?}");
    }

    #[test]
    fn dotted_and_sectioned_keys() {
        let text = "algo.name = fedbuff\nfedbuff.K = 2\ndata.alpha = 0.1\n[async]\nalpha = 0.7\n\
                    staleness_fn = hinge\nstaleness_fn_kwargs = {a=2.0, b=1}\n[compass]\nalpha = 0.9\n";
        let c = ExperimentConfig::parse_str(text).unwrap();
        assert_eq!(c.protocol.algorithm, Algorithm::FedBuff);
        assert_eq!(c.fedbuff.k, 2);
        assert_eq!(c.workload.data_alpha, 0.1);
        assert_eq!(c.fedasync.alpha, 0.7);
        assert_eq!(c.compass.alpha, 0.9);
        assert_eq!(c.fedqueue.alpha, 0.5);
        assert_eq!(c.fedasync.staleness_fn.eval(1), 1.0);
        assert_eq!(c.fedasync.staleness_fn.eval(3), 1.0 / 5.0);
    }

    #[test]
    fn round_trip_preserves_everything() {
        let mut c = ExperimentConfig::default();
        c.fedqueue.staleness_mode = DecayMode::Harmonic;
        c.fedqueue.staleness_beta = 0.5;
        c.fedqueue.queue_rho = 0.1 + 0.2;
        c.protocol.throughput = vec![10.3, 28.0, 1.0 / 3.0, 4.25];
        c.compass.staleness_fn.b = Some(3.5);
        let back = ExperimentConfig::parse_str(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn staleness_functions() {
        let poly = StalenessFn::polynomial(1.0);
        assert_eq!(poly.eval(0), 1.0);
        assert_eq!(poly.eval(3), 0.25);
        assert_eq!(StalenessFn::constant().eval(17), 1.0);
    }

    #[test]
    fn sleep_mode_is_refused() {
        assert!(ExperimentConfig::parse_str("delay_mode = sleep").is_err());
        assert!(ExperimentConfig::parse_str("algo.delay_mode = simulate").is_ok());
    }

    #[test]
    fn bare_alias_resolution() {
        assert_eq!(resolve_key(None, "rho").as_deref(), Some("fedqueue.queue_rho"));
        assert_eq!(resolve_key(None, "alpha").as_deref(), Some("fedqueue.alpha"));
        assert_eq!(resolve_key(None, "async.alpha").as_deref(), Some("async.alpha"));
        assert_eq!(resolve_key(None, "nonsense"), None);
    }
}
