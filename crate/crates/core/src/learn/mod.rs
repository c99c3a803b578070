//! Local objectives: a quadratic family with known constants and a synthetic
//! non-IID classification task.

pub mod classify;
pub mod partition;
pub mod quadratic;
pub mod stats;

use rand::Rng;

use crate::error::{Error, Result};
pub use classify::{ClassifySpec, SyntheticClassify};
pub use partition::{dirichlet_partition, iid_partition, mean_label_skew, DataPartition};
pub use quadratic::QuadraticObjective;
pub use stats::{heterogeneity_stats, HeterogeneityStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    /// Classification only.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Objective {
    Quadratic(QuadraticObjective),
    Classify(SyntheticClassify),
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.dim(),
            Objective::Classify(c) => c.dim(),
        }
    }

    pub fn num_clients(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.num_clients(),
            Objective::Classify(c) => c.num_clients(),
        }
    }

    /// Local dataset sizes; quadratic clients count as one sample each.
    pub fn client_sizes(&self) -> Vec<usize> {
        match self {
            Objective::Quadratic(q) => vec![1; q.num_clients()],
            Objective::Classify(c) => c.partition().sizes(),
        }
    }

    pub fn initial_model<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Objective::Quadratic(q) => vec![0.0; q.dim()],
            Objective::Classify(c) => c.initial_model(rng),
        }
    }

    /// `F_k(w)` on the client's full local data.
    pub fn client_loss(&self, k: usize, w: &[f64]) -> f64 {
        match self {
            Objective::Quadratic(q) => q.client_loss(k, w),
            Objective::Classify(c) => c.client_loss(k, w),
        }
    }

    /// Exact `grad F_k(w)`.
    pub fn client_gradient(&self, k: usize, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        match self {
            Objective::Quadratic(q) => q.client_gradient_into(k, w, &mut g),
            Objective::Classify(c) => c.client_gradient_into(k, w, &mut g),
        }
        g
    }

    /// `grad F(w) = sum_k p_k grad F_k(w)`.
    pub fn global_gradient(&self, w: &[f64], weights: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; self.dim()];
        for (k, pk) in weights.iter().enumerate() {
            if *pk == 0.0 {
                continue;
            }
            let g = self.client_gradient(k, w);
            total.iter_mut().zip(&g).for_each(|(t, gi)| *t += pk * gi);
        }
        total
    }

    /// Writes an unbiased estimate of `grad F_k(w)` into `out`.
    pub fn stochastic_gradient_into<R: Rng + ?Sized>(
        &self,
        k: usize,
        w: &[f64],
        batch_size: usize,
        rng: &mut R,
        out: &mut [f64],
        scratch: &mut Vec<usize>,
    ) -> Result<()> {
        if batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if w.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), actual: w.len() });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite model parameter".into()));
        }
        match self {
            Objective::Quadratic(q) => {
                q.client_gradient_into(k, w, out);
                q.add_noise(k, out, rng);
            }
            Objective::Classify(c) => c.minibatch_gradient_into(k, w, batch_size, rng, out, scratch),
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient on client {k}")));
        }
        Ok(())
    }

    /// Deterministic full-split evaluation. The quadratic has no data split and
    /// reports the weighted global loss for both.
    pub fn evaluate(&self, w: &[f64], split: Split) -> Evaluation {
        match self {
            Objective::Quadratic(q) => Evaluation { loss: q.loss(w), accuracy: None },
            Objective::Classify(c) => {
                let (loss, acc) = c.evaluate(w, split == Split::Test);
                Evaluation { loss, accuracy: Some(acc) }
            }
        }
    }
}

/// Free-function form of [`Objective::stochastic_gradient_into`].
pub fn stochastic_gradient<R: Rng + ?Sized>(
    objective: &Objective,
    k: usize,
    w: &[f64],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; objective.dim()];
    let mut scratch = Vec::new();
    objective.stochastic_gradient_into(k, w, batch_size, rng, &mut out, &mut scratch)?;
    Ok(out)
}

pub fn evaluate(objective: &Objective, w: &[f64], split: Split) -> Evaluation {
    objective.evaluate(w, split)
}

/// Central finite-difference gradient of `F_k`.
pub fn finite_difference_gradient(objective: &Objective, k: usize, w: &[f64], h: f64) -> Vec<f64> {
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|i| {
            probe[i] = w[i] + h;
            let up = objective.client_loss(k, &probe);
            probe[i] = w[i] - h;
            let down = objective.client_loss(k, &probe);
            probe[i] = w[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
