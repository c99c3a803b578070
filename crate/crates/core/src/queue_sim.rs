//! Synthetic batch-scheduler behaviour: admission (queue) delays, compute
//! time for a number of local steps, and the zero-mean error process used by
//! the staleness-bound checker.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

/// Queue delay distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueKind {
    Fixed,
    Lognormal,
}

impl QueueKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed" => Some(QueueKind::Fixed),
            "lognormal" => Some(QueueKind::Lognormal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QueueKind::Fixed => "fixed",
            QueueKind::Lognormal => "lognormal",
        }
    }
}

/// How the per-client lognormal location parameter is read.
///
/// `Median`: q = exp(ln mu + rho Z), so mu is the median delay.
/// `Mean`: q = exp(ln mu - rho^2/2 + rho Z), so mu is the arithmetic mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanSemantics {
    Median,
    Mean,
}

impl MeanSemantics {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "median" => Some(MeanSemantics::Median),
            "mean" => Some(MeanSemantics::Mean),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MeanSemantics::Median => "median",
            MeanSemantics::Mean => "mean",
        }
    }
}

/// Per-client stochastic admission-delay generator.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueModel {
    pub kind: QueueKind,
    pub fixed_delays: Vec<f64>,
    pub means: Vec<f64>,
    pub rho: f64,
    /// Lag-one correlation of the log-space noise across a client's
    /// successive jobs. Zero gives independent draws.
    pub persistence: f64,
    pub semantics: MeanSemantics,
}

impl QueueModel {
    pub fn fixed(delays: Vec<f64>) -> Result<Self> {
        let model = QueueModel {
            kind: QueueKind::Fixed,
            fixed_delays: delays,
            means: Vec::new(),
            rho: 0.0,
            persistence: 0.0,
            semantics: MeanSemantics::Median,
        };
        model.validate(model.fixed_delays.len())?;
        Ok(model)
    }

    pub fn lognormal(means: Vec<f64>, rho: f64) -> Result<Self> {
        let model = QueueModel {
            kind: QueueKind::Lognormal,
            fixed_delays: Vec::new(),
            means,
            rho,
            persistence: 0.0,
            semantics: MeanSemantics::Median,
        };
        model.validate(model.means.len())?;
        Ok(model)
    }

    pub fn with_persistence(mut self, persistence: f64) -> Result<Self> {
        self.persistence = persistence;
        self.validate(self.num_clients())?;
        Ok(self)
    }

    pub fn num_clients(&self) -> usize {
        match self.kind {
            QueueKind::Fixed => self.fixed_delays.len(),
            QueueKind::Lognormal => self.means.len(),
        }
    }

    pub fn validate(&self, num_clients: usize) -> Result<()> {
        let (key, params) = match self.kind {
            QueueKind::Fixed => ("queue_fixed", &self.fixed_delays),
            QueueKind::Lognormal => ("queue_means", &self.means),
        };
        if params.len() != num_clients {
            return Err(Error::config(
                key,
                format!("expected {num_clients} values, got {}", params.len()),
            ));
        }
        if params.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(key, "delay parameters must be finite and >= 0"));
        }
        if self.kind == QueueKind::Lognormal && params.contains(&0.0) {
            return Err(Error::config(key, "lognormal location must be > 0"));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::config("queue_rho", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return Err(Error::config("queue_corr", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Location parameter mu_k; the value a static predictor would use.
    pub fn location(&self, k: usize) -> f64 {
        match self.kind {
            QueueKind::Fixed => self.fixed_delays[k],
            QueueKind::Lognormal => self.means[k],
        }
    }

    /// Maps a standard-normal innovation to a delay for client `k`.
    pub fn delay_from_normal(&self, k: usize, z: f64) -> f64 {
        match self.kind {
            QueueKind::Fixed => self.fixed_delays[k],
            QueueKind::Lognormal => {
                let shift = match self.semantics {
                    MeanSemantics::Median => 0.0,
                    MeanSemantics::Mean => -0.5 * self.rho * self.rho,
                };
                (self.means[k].ln() + shift + self.rho * z).exp()
            }
        }
    }
}

/// Draws one independent queue delay for client `k`.
pub fn sample_queue_delay<R: Rng + ?Sized>(model: &QueueModel, k: usize, rng: &mut R) -> f64 {
    debug_assert!(k < model.num_clients());
    match model.kind {
        QueueKind::Fixed => model.fixed_delays[k],
        QueueKind::Lognormal => {
            let z: f64 = StandardNormal.sample(rng);
            model.delay_from_normal(k, z)
        }
    }
}

/// Job-indexed delay sequence for every client.
///
/// The delay of client `k`'s `n`-th job depends only on `(seed, k, n)`, so
/// every orchestrator sees the same queue for the same seed. With
/// `persistence > 0` the log-space noise follows a stationary AR(1) over job
/// index; the marginal distribution is unchanged.
#[derive(Debug, Clone)]
pub struct QueueSampler {
    model: QueueModel,
    seed: u64,
    latent: Vec<Vec<f64>>,
}

impl QueueSampler {
    pub fn new(model: QueueModel, seed: u64) -> Self {
        let k = model.num_clients();
        QueueSampler {
            model,
            seed,
            latent: vec![Vec::new(); k],
        }
    }

    pub fn model(&self) -> &QueueModel {
        &self.model
    }

    fn innovation(&self, k: usize, n: usize) -> f64 {
        let mut rng = substream(self.seed, Purpose::QueueDelay, k as u64, n as u64);
        StandardNormal.sample(&mut rng)
    }

    /// Delay of job number `n` (0-based) of client `k`.
    pub fn delay(&mut self, k: usize, n: usize) -> f64 {
        if self.model.kind == QueueKind::Fixed {
            return self.model.fixed_delays[k];
        }
        let phi = self.model.persistence;
        while self.latent[k].len() <= n {
            let i = self.latent[k].len();
            let z = self.innovation(k, i);
            let x = match self.latent[k].last() {
                Some(prev) if phi > 0.0 => phi * prev + (1.0 - phi * phi).sqrt() * z,
                _ => z,
            };
            self.latent[k].push(x);
        }
        self.model.delay_from_normal(k, self.latent[k][n])
    }
}

/// Per-client training throughput.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputeProfile {
    /// Local SGD steps per second at slowdown 1.
    pub throughput: Vec<f64>,
    /// Multiplier on per-step time.
    pub slowdown: Vec<f64>,
    /// Per-step time is scaled by `1 + jitter * U(-1, 1)`.
    pub jitter: f64,
}

impl ComputeProfile {
    pub fn new(throughput: Vec<f64>, slowdown: Vec<f64>) -> Result<Self> {
        let profile = ComputeProfile {
            throughput,
            slowdown,
            jitter: 0.0,
        };
        profile.validate(profile.throughput.len())?;
        Ok(profile)
    }

    pub fn uniform(k: usize, throughput: f64) -> Self {
        ComputeProfile {
            throughput: vec![throughput; k],
            slowdown: vec![1.0; k],
            jitter: 0.0,
        }
    }

    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if self.throughput.len() != num_clients {
            return Err(Error::config(
                "throughput",
                format!("expected {num_clients} values, got {}", self.throughput.len()),
            ));
        }
        if self.slowdown.len() != num_clients {
            return Err(Error::config(
                "slowdown",
                format!("expected {num_clients} values, got {}", self.slowdown.len()),
            ));
        }
        if self.throughput.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::config("throughput", "must be > 0"));
        }
        if self.slowdown.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::config("slowdown", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::config("compute_jitter", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Seconds per step for client `k`, before jitter.
    pub fn step_time(&self, k: usize) -> f64 {
        self.slowdown[k] / self.throughput[k]
    }

    /// Effective steps per second, as a profiler would measure it.
    /// Infinite when slowdown is zero.
    pub fn effective_throughput(&self, k: usize) -> f64 {
        self.throughput[k] / self.slowdown[k]
    }

    /// Duration of one step including jitter.
    pub fn sample_step_time<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        let base = self.step_time(k);
        if self.jitter == 0.0 {
            base
        } else {
            base * (1.0 + self.jitter * rng.random_range(-1.0..1.0))
        }
    }
}

/// Time to run `steps` local steps on client `k` without jitter.
pub fn compute_time(profile: &ComputeProfile, k: usize, steps: u64) -> f64 {
    if steps == 0 {
        return 0.0;
    }
    steps as f64 / profile.throughput[k] * profile.slowdown[k]
}

/// One draw of a zero-mean Gaussian prediction error with scale `rho_k`.
pub fn sample_prediction_error<R: Rng + ?Sized>(rho_k: f64, rng: &mut R) -> f64 {
    if rho_k == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    rho_k * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn fixed_returns_configured_delay() {
        let model = QueueModel::fixed(vec![0.5, 1.5, 2.4, 6.0]).unwrap();
        let mut rng = substream(1, Purpose::QueueDelay, 0, 0);
        assert_eq!(sample_queue_delay(&model, 3, &mut rng), 6.0);
    }

    #[test]
    fn zero_noise_lognormal_collapses_to_location() {
        let model = QueueModel::lognormal(vec![1.5, 2.5, 3.5, 4.5], 0.0).unwrap();
        for z in [-3.0, 0.0, 0.7, 5.0] {
            let q = model.delay_from_normal(2, z);
            assert!((q - 3.5).abs() < 1e-12, "{q}");
        }
    }

    #[test]
    fn lognormal_unit_innovation() {
        let model = QueueModel::lognormal(vec![1.5, 2.5, 3.5, 4.5], 0.4).unwrap();
        let q = model.delay_from_normal(0, 1.0);
        assert!((q - 2.237_737_046_461_905).abs() < 1e-12, "{q}");
    }

    #[test]
    fn mean_semantics_shift_the_location() {
        let mut model = QueueModel::lognormal(vec![2.0], 0.5).unwrap();
        model.semantics = MeanSemantics::Mean;
        let mut rng = substream(3, Purpose::QueueDelay, 0, 0);
        let n = 200_000;
        let mean = (0..n).map(|_| sample_queue_delay(&model, 0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(QueueModel::fixed(vec![1.0, -0.1]).is_err());
        assert!(QueueModel::lognormal(vec![1.0, 2.0], -0.3).is_err());
        let model = QueueModel::lognormal(vec![1.0, 2.0], 0.3).unwrap();
        assert!(model.validate(3).is_err());
        assert!(model.with_persistence(1.0).is_err());
    }

    #[test]
    fn sampler_is_addressed_by_client_and_job() {
        let model = QueueModel::lognormal(vec![1.5, 2.5], 0.9).unwrap();
        let mut a = QueueSampler::new(model.clone(), 42);
        let mut b = QueueSampler::new(model, 42);
        // different query order, identical values
        let a_vals: Vec<f64> = (0..5).map(|n| a.delay(1, n)).collect();
        let b_last = b.delay(1, 4);
        let b_first = b.delay(1, 0);
        assert_eq!(a_vals[4].to_bits(), b_last.to_bits());
        assert_eq!(a_vals[0].to_bits(), b_first.to_bits());
        assert_ne!(a.delay(0, 0), a.delay(1, 0));
    }

    #[test]
    fn persistence_keeps_marginal_and_adds_correlation() {
        let model = QueueModel::lognormal(vec![1.0], 1.0)
            .unwrap()
            .with_persistence(0.8)
            .unwrap();
        let mut sampler = QueueSampler::new(model, 9);
        let n = 20_000;
        let logs: Vec<f64> = (0..n).map(|i| sampler.delay(0, i).ln()).collect();
        let mean = logs.iter().sum::<f64>() / n as f64;
        let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let cov = logs
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        assert!(mean.abs() < 0.1, "{mean}");
        assert!((var - 1.0).abs() < 0.1, "{var}");
        assert!((cov / var - 0.8).abs() < 0.05, "{}", cov / var);
    }

    #[test]
    fn compute_time_cases() {
        let p = ComputeProfile::new(vec![10.0], vec![1.0]).unwrap();
        assert_eq!(compute_time(&p, 0, 60), 6.0);
        assert_eq!(compute_time(&p, 0, 0), 0.0);
        let slow = ComputeProfile::new(vec![10.0], vec![2.0]).unwrap();
        assert_eq!(compute_time(&slow, 0, 60), 12.0);
    }

    #[test]
    fn prediction_error_moments() {
        let mut rng = substream(5, Purpose::PredictionError, 0, 0);
        assert_eq!(sample_prediction_error(0.0, &mut rng), 0.0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_prediction_error(0.4, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let std = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((std - 0.4).abs() < 0.01, "{std}");
    }
}
