use rand::Rng;

use super::Objective;
use crate::error::{Error, Result};

/// Empirical stand-ins for the smoothness, noise and dissimilarity constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeterogeneityStats {
    /// max over probes and clients of `||grad F_k - grad F||`.
    pub g_hat: f64,
    /// max over clients of the RMS stochastic-gradient deviation.
    pub sigma_hat: f64,
    /// Largest secant ratio found by power iteration on the global gradient.
    pub l_hat: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const POWER_ITERS: usize = 60;
const SECANT_STEP: f64 = 1e-4;

/// Estimates `(G, sigma, L)` from probe points. `noise_draws` stochastic
/// gradients per client are taken at the first probe.
pub fn heterogeneity_stats<R: Rng + ?Sized>(
    objective: &Objective,
    probes: &[Vec<f64>],
    weights: &[f64],
    batch_size: usize,
    noise_draws: usize,
    rng: &mut R,
) -> Result<HeterogeneityStats> {
    if probes.len() < 10 {
        return Err(Error::Input(format!("need >= 10 probe points, got {}", probes.len())));
    }
    let p = objective.dim();
    let k_total = objective.num_clients();

    let mut g_hat = 0.0f64;
    for w in probes {
        let global = objective.global_gradient(w, weights);
        for k in 0..k_total {
            let gk = objective.client_gradient(k, w);
            let d: Vec<f64> = gk.iter().zip(&global).map(|(a, b)| a - b).collect();
            g_hat = g_hat.max(norm(&d));
        }
    }

    let mut sigma_hat = 0.0f64;
    if noise_draws > 0 {
        let w = &probes[0];
        let mut out = vec![0.0; p];
        let mut scratch = Vec::new();
        for k in 0..k_total {
            let exact = objective.client_gradient(k, w);
            let mut acc = 0.0;
            for _ in 0..noise_draws {
                objective.stochastic_gradient_into(k, w, batch_size, rng, &mut out, &mut scratch)?;
                acc += out.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            }
            sigma_hat = sigma_hat.max((acc / noise_draws as f64).sqrt());
        }
    }

    let mut l_hat = 0.0f64;
    for w in probes {
        let base = objective.global_gradient(w, weights);
        let mut v: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut shifted = w.clone();
        for _ in 0..POWER_ITERS {
            let nv = norm(&v);
            if nv == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= nv);
            shifted.iter_mut().zip(w).zip(&v).for_each(|((s, wi), vi)| *s = wi + SECANT_STEP * vi);
            let moved = objective.global_gradient(&shifted, weights);
            v = moved.iter().zip(&base).map(|(a, b)| (a - b) / SECANT_STEP).collect();
            l_hat = l_hat.max(norm(&v));
        }
    }

    Ok(HeterogeneityStats { g_hat, sigma_hat, l_hat })
}
