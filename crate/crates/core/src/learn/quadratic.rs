use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// `F_k(w) = 1/2 (w - b_k)^T A_k (w - b_k)` with optional Gaussian gradient
/// noise of total variance `sigma_k^2`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    hessians: Vec<DMatrix<f64>>,
    offsets: Vec<DVector<f64>>,
    sigma: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadraticObjective {
    pub fn new(
        hessians: Vec<DMatrix<f64>>,
        offsets: Vec<Vec<f64>>,
        sigma: Vec<f64>,
    ) -> Result<Self> {
        let k = hessians.len();
        if k == 0 || offsets.len() != k || sigma.len() != k {
            return Err(Error::Input("quadratic needs one A_k, b_k and sigma_k per client".into()));
        }
        let p = hessians[0].nrows();
        for a in &hessians {
            if a.nrows() != p || a.ncols() != p {
                return Err(Error::Dimension { expected: p, actual: a.nrows() });
            }
            if (a - a.transpose()).abs().max() > 1e-12 {
                return Err(Error::Input("A_k must be symmetric".into()));
            }
            let min_eig = SymmetricEigen::new(a.clone()).eigenvalues.min();
            if min_eig < -1e-12 {
                return Err(Error::Input("A_k must be positive semidefinite".into()));
            }
        }
        let offsets = offsets
            .into_iter()
            .map(|b| {
                if b.len() != p {
                    Err(Error::Dimension { expected: p, actual: b.len() })
                } else {
                    Ok(DVector::from_vec(b))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Input("sigma_k must be >= 0".into()));
        }
        Ok(QuadraticObjective {
            hessians,
            offsets,
            sigma,
            weights: vec![1.0 / k as f64; k],
        })
    }

    /// Every client shares `A = diag(diag)`; offsets differ per client.
    pub fn diagonal(diag: &[f64], offsets: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(diag));
        let k = offsets.len();
        Self::new(vec![a; k], offsets, vec![sigma; k])
    }

    /// Random instance sharing one Hessian with spectrum spread evenly over
    /// `[mu, l]`; clients differ only through offsets of scale `spread`, so
    /// `spread = 0` gives identical clients.
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        clients: usize,
        mu: f64,
        l: f64,
        spread: f64,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
        let q = g.qr().q();
        let spectrum = DVector::from_fn(dim, |i, _| {
            if dim == 1 {
                l
            } else {
                mu + (l - mu) * i as f64 / (dim - 1) as f64
            }
        });
        let a: DMatrix<f64> = &q * DMatrix::from_diagonal(&spectrum) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let center: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let offsets = (0..clients)
            .map(|_| {
                center
                    .iter()
                    .map(|c| {
                        let z: f64 = StandardNormal.sample(rng);
                        c + spread * z
                    })
                    .collect()
            })
            .collect();
        Self::new(vec![a; clients], offsets, vec![sigma; clients])
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.hessians.len() {
            return Err(Error::Dimension { expected: self.hessians.len(), actual: weights.len() });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || total <= 0.0 {
            return Err(Error::Input("weights must be nonnegative with positive sum".into()));
        }
        self.weights = weights.iter().map(|w| w / total).collect();
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.offsets[0].len()
    }

    pub fn num_clients(&self) -> usize {
        self.hessians.len()
    }

    pub fn noise_scale(&self, k: usize) -> f64 {
        self.sigma[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn client_loss(&self, k: usize, w: &[f64]) -> f64 {
        let d = DVector::from_column_slice(w) - &self.offsets[k];
        0.5 * d.dot(&(&self.hessians[k] * &d))
    }

    pub fn client_gradient_into(&self, k: usize, w: &[f64], out: &mut [f64]) {
        let d = DVector::from_column_slice(w) - &self.offsets[k];
        let g = &self.hessians[k] * d;
        out.copy_from_slice(g.as_slice());
    }

    pub fn add_noise<R: Rng + ?Sized>(&self, k: usize, grad: &mut [f64], rng: &mut R) {
        let sigma = self.sigma[k];
        if sigma == 0.0 {
            return;
        }
        let scale = sigma / (grad.len() as f64).sqrt();
        for g in grad.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *g += scale * z;
        }
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        (0..self.num_clients())
            .map(|k| self.weights[k] * self.client_loss(k, w))
            .sum()
    }

    fn weighted_hessian(&self) -> DMatrix<f64> {
        let p = self.dim();
        self.hessians
            .iter()
            .zip(&self.weights)
            .fold(DMatrix::zeros(p, p), |acc, (a, pk)| acc + a * *pk)
    }

    /// Largest eigenvalue of the global Hessian.
    pub fn smoothness(&self) -> f64 {
        SymmetricEigen::new(self.weighted_hessian()).eigenvalues.max()
    }

    /// Solves `(sum p_k A_k) w = sum p_k A_k b_k`.
    pub fn minimizer(&self) -> Result<Vec<f64>> {
        let h = self.weighted_hessian();
        let rhs = self
            .hessians
            .iter()
            .zip(&self.offsets)
            .zip(&self.weights)
            .fold(DVector::zeros(self.dim()), |acc, ((a, b), pk)| acc + a * b * *pk);
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::Numerical("global Hessian is singular".into()))?;
        Ok(chol.solve(&rhs).as_slice().to_vec())
    }

    /// `F* = 1/2 sum p_k b_k^T A_k b_k - 1/2 w*^T H w*`.
    pub fn optimal_value(&self) -> Result<f64> {
        let w = DVector::from_vec(self.minimizer()?);
        let constant: f64 = self
            .hessians
            .iter()
            .zip(&self.offsets)
            .zip(&self.weights)
            .map(|((a, b), pk)| 0.5 * pk * b.dot(&(a * b)))
            .sum();
        Ok(constant - 0.5 * w.dot(&(self.weighted_hessian() * &w)))
    }
}
