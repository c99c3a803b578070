//! Deterministic discrete-event engine: virtual clock, shared job
//! environment, the FedQueue server loop and parallel sweeps.

pub mod clock;
pub mod env;
mod fedqueue;

use rayon::prelude::*;

use crate::baselines;
use crate::config::{Algorithm, DatasetKind, ExperimentConfig, ModelKind, PartitionKind};
use crate::error::{Error, Result};
use crate::learn::{ClassifySpec, Objective, QuadraticObjective, SyntheticClassify};
use crate::metrics::MetricsLog;
use crate::protocol::client_weights;
use crate::rng::{derive_seed, substream, Purpose};

pub use clock::{EventKind, SimClock, SimEvent};
pub use env::{Dispatch, Env, InFlight};
pub use fedqueue::run_fedqueue;

/// Builds the learning task for `cfg`; data and partition draws depend only
/// on the protocol seed.
pub fn build_objective(cfg: &ExperimentConfig) -> Result<Objective> {
    let seed = cfg.protocol.seed;
    let k = cfg.protocol.num_clients;
    let w = &cfg.workload;
    let mut data_rng = substream(seed, Purpose::Dataset, 0, 0);
    match w.dataset {
        DatasetKind::Synthetic => {
            let spec = ClassifySpec {
                num_features: w.num_features,
                num_classes: w.num_classes,
                train_samples: w.train_samples,
                test_samples: w.test_samples,
                class_sep: w.class_sep,
                hidden: if w.model == ModelKind::Mlp { w.hidden } else { 0 },
                dirichlet_alpha: match w.partition {
                    PartitionKind::NonIid => Some(w.data_alpha),
                    PartitionKind::Iid => None,
                },
            };
            let mut part_rng = substream(seed, Purpose::Partition, 0, 0);
            Ok(Objective::Classify(SyntheticClassify::generate(spec, k, &mut data_rng, &mut part_rng)?))
        }
        DatasetKind::Quadratic => Ok(Objective::Quadratic(QuadraticObjective::random(
            w.quad_dim,
            k,
            w.quad_mu,
            w.quad_l,
            w.quad_spread,
            w.quad_sigma,
            &mut data_rng,
        )?)),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsLog> {
    cfg.validate()?;
    let objective = build_objective(cfg)?;
    run_with_objective(cfg, &objective)
}

/// Runs the configured algorithm on a prebuilt objective. A diverging model
/// ends the run early with `failed` set instead of returning an error.
pub fn run_with_objective(cfg: &ExperimentConfig, objective: &Objective) -> Result<MetricsLog> {
    let weights = client_weights(cfg.fedqueue.client_weight_mode, &objective.client_sizes());
    let mut env = Env::new(cfg, objective, weights)?;
    let res = match cfg.protocol.algorithm {
        Algorithm::FedQueue => run_fedqueue(&mut env),
        Algorithm::FedAvg => baselines::run_fedavg(&mut env),
        Algorithm::FedAsync => baselines::run_fedasync(&mut env),
        Algorithm::FedBuff => baselines::run_fedbuff(&mut env),
        Algorithm::FedCompass => baselines::run_fedcompass_lite(&mut env),
    };
    match res {
        Ok(()) => Ok(env.log),
        Err(Error::Numerical(msg)) => {
            env.log.failed = Some(msg);
            Ok(env.log)
        }
        Err(e) => Err(e),
    }
}

/// Seed of trial `t`: the master seed itself for trial 0, a derived seed
/// otherwise. Independent of the swept value, so points share randomness.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    if trial == 0 {
        master
    } else {
        derive_seed(master, 0, trial as u64)
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: String,
    pub trial: usize,
    pub config: ExperimentConfig,
    pub log: MetricsLog,
}

/// Runs `trials` seeds for every value of `axis` on up to `jobs` threads.
/// Results come back in (value, trial) order regardless of scheduling.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: &str,
    values: &[String],
    trials: usize,
    jobs: usize,
) -> Result<Vec<SweepPoint>> {
    if trials == 0 {
        return Err(Error::Input("trials must be >= 1".into()));
    }
    let mut configs = Vec::with_capacity(values.len() * trials);
    for v in values {
        for t in 0..trials {
            let mut cfg = base.clone();
            cfg.set_by_name(axis, v)?;
            // Derived after the axis is applied so a swept seed is honoured.
            cfg.protocol.seed = trial_seed(cfg.protocol.seed, t);
            cfg.validate()?;
            configs.push((v.clone(), t, cfg));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    pool.install(|| {
        configs
            .into_par_iter()
            .map(|(value, trial, config)| {
                let log = run_experiment(&config)?;
                Ok(SweepPoint { value, trial, config, log })
            })
            .collect()
    })
}
