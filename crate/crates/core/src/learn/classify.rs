//! Synthetic Gaussian-mixture classification with a linear or one-hidden-layer
//! softmax model.
//!
//! Parameters are packed into one flat vector. Linear: `W (C x d)` then
//! `b (C)`. MLP: `W1 (H x d)`, `b1 (H)`, `W2 (C x H)`, `b2 (C)`.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::partition::{dirichlet_partition, iid_partition, DataPartition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifySpec {
    pub num_features: usize,
    pub num_classes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Standard deviation of the class-mean coordinates; unit feature noise.
    pub class_sep: f64,
    /// Hidden width; 0 selects the linear model.
    pub hidden: usize,
    /// Dirichlet concentration; `None` for an IID split.
    pub dirichlet_alpha: Option<f64>,
}

impl Default for ClassifySpec {
    fn default() -> Self {
        ClassifySpec {
            num_features: 20,
            num_classes: 10,
            train_samples: 4000,
            test_samples: 2000,
            class_sep: 0.5,
            hidden: 0,
            dirichlet_alpha: Some(0.5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticClassify {
    spec: ClassifySpec,
    train_x: Vec<f64>,
    train_y: Vec<usize>,
    test_x: Vec<f64>,
    test_y: Vec<usize>,
    partition: DataPartition,
}

fn draw_samples<R: Rng + ?Sized>(
    means: &[Vec<f64>],
    n: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<usize>) {
    let c = means.len();
    let d = means[0].len();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..c);
        for m in &means[label] {
            let z: f64 = StandardNormal.sample(rng);
            x.push(m + z);
        }
        y.push(label);
    }
    (x, y)
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

impl SyntheticClassify {
    pub fn generate<R: Rng + ?Sized>(
        spec: ClassifySpec,
        num_clients: usize,
        data_rng: &mut R,
        partition_rng: &mut R,
    ) -> Result<Self> {
        if spec.num_features == 0 || spec.num_classes < 2 {
            return Err(Error::Input("classification needs >= 1 feature and >= 2 classes".into()));
        }
        if spec.train_samples == 0 || spec.test_samples == 0 {
            return Err(Error::Input("train and test sets must be nonempty".into()));
        }
        if !(spec.class_sep.is_finite() && spec.class_sep >= 0.0) {
            return Err(Error::config("class_sep", "must be >= 0"));
        }
        let normal = Normal::new(0.0, spec.class_sep.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let means: Vec<Vec<f64>> = (0..spec.num_classes)
            .map(|_| (0..spec.num_features).map(|_| normal.sample(data_rng)).collect())
            .collect();
        let (train_x, train_y) = draw_samples(&means, spec.train_samples, data_rng);
        let (test_x, test_y) = draw_samples(&means, spec.test_samples, data_rng);
        let partition = match spec.dirichlet_alpha {
            Some(alpha) => dirichlet_partition(&train_y, num_clients, alpha, partition_rng)?,
            None => iid_partition(&train_y, num_clients, partition_rng)?,
        };
        Ok(SyntheticClassify { spec, train_x, train_y, test_x, test_y, partition })
    }

    pub fn spec(&self) -> &ClassifySpec {
        &self.spec
    }

    pub fn partition(&self) -> &DataPartition {
        &self.partition
    }

    pub fn train_labels(&self) -> &[usize] {
        &self.train_y
    }

    pub fn num_clients(&self) -> usize {
        self.partition.num_clients()
    }

    pub fn dim(&self) -> usize {
        let (d, c, h) = (self.spec.num_features, self.spec.num_classes, self.spec.hidden);
        if h == 0 {
            c * d + c
        } else {
            h * d + h + c * h + c
        }
    }

    pub fn initial_model<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (d, c, h) = (self.spec.num_features, self.spec.num_classes, self.spec.hidden);
        let mut w = vec![0.0; self.dim()];
        if h > 0 {
            let s1 = 1.0 / (d as f64).sqrt();
            let s2 = 1.0 / (h as f64).sqrt();
            for v in &mut w[..h * d] {
                let z: f64 = StandardNormal.sample(rng);
                *v = s1 * z;
            }
            let off = h * d + h;
            for v in &mut w[off..off + c * h] {
                let z: f64 = StandardNormal.sample(rng);
                *v = s2 * z;
            }
        }
        w
    }

    fn features(&self, test: bool, i: usize) -> (&[f64], usize) {
        let d = self.spec.num_features;
        if test {
            (&self.test_x[i * d..(i + 1) * d], self.test_y[i])
        } else {
            (&self.train_x[i * d..(i + 1) * d], self.train_y[i])
        }
    }

    /// Loss of one sample; when `grad` is given the sample gradient scaled by
    /// `scale` is added to it. Returns (loss, predicted class).
    fn sample_pass(
        &self,
        w: &[f64],
        x: &[f64],
        y: usize,
        grad: Option<(&mut [f64], f64)>,
        hidden_buf: &mut Vec<f64>,
        logits: &mut Vec<f64>,
    ) -> (f64, usize) {
        let (d, c, h) = (self.spec.num_features, self.spec.num_classes, self.spec.hidden);
        logits.clear();
        logits.resize(c, 0.0);
        let (inputs, in_dim, out_off) = if h == 0 {
            (x, d, 0)
        } else {
            hidden_buf.clear();
            for j in 0..h {
                let row = &w[j * d..(j + 1) * d];
                let z: f64 = w[h * d + j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                hidden_buf.push(z.tanh());
            }
            (hidden_buf.as_slice(), h, h * d + h)
        };
        for (j, l) in logits.iter_mut().enumerate() {
            let row = &w[out_off + j * in_dim..out_off + (j + 1) * in_dim];
            *l = w[out_off + c * in_dim + j] + row.iter().zip(inputs).map(|(a, b)| a * b).sum::<f64>();
        }
        let pred = logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
            .0;
        softmax_in_place(logits);
        let loss = -logits[y].max(1e-300).ln();
        if let Some((g, scale)) = grad {
            logits[y] -= 1.0;
            for j in 0..c {
                let dj = scale * logits[j];
                let row = &mut g[out_off + j * in_dim..out_off + (j + 1) * in_dim];
                row.iter_mut().zip(inputs).for_each(|(gv, a)| *gv += dj * a);
                g[out_off + c * in_dim + j] += dj;
            }
            if h > 0 {
                for i in 0..h {
                    let mut dh = 0.0;
                    for j in 0..c {
                        dh += w[out_off + j * h + i] * logits[j];
                    }
                    let dz = scale * dh * (1.0 - hidden_buf[i] * hidden_buf[i]);
                    let row = &mut g[i * d..(i + 1) * d];
                    row.iter_mut().zip(x).for_each(|(gv, a)| *gv += dz * a);
                    g[h * d + i] += dz;
                }
            }
        }
        (loss, pred)
    }

    /// Mean cross-entropy over the listed training samples, with its gradient.
    pub fn batch_loss_grad(&self, w: &[f64], indices: &[usize], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        if indices.is_empty() {
            return 0.0;
        }
        let scale = 1.0 / indices.len() as f64;
        let mut hb = Vec::new();
        let mut lg = Vec::new();
        let mut total = 0.0;
        for &i in indices {
            let (x, y) = self.features(false, i);
            total += self.sample_pass(w, x, y, Some((&mut *grad, scale)), &mut hb, &mut lg).0;
        }
        total * scale
    }

    pub fn client_loss(&self, k: usize, w: &[f64]) -> f64 {
        let idx = &self.partition.client_indices[k];
        let mut hb = Vec::new();
        let mut lg = Vec::new();
        let total: f64 = idx
            .iter()
            .map(|&i| {
                let (x, y) = self.features(false, i);
                self.sample_pass(w, x, y, None, &mut hb, &mut lg).0
            })
            .sum();
        total / idx.len() as f64
    }

    pub fn client_gradient_into(&self, k: usize, w: &[f64], out: &mut [f64]) {
        self.batch_loss_grad(w, &self.partition.client_indices[k], out);
    }

    /// Minibatch gradient drawn with replacement from client `k`'s shard.
    pub fn minibatch_gradient_into<R: Rng + ?Sized>(
        &self,
        k: usize,
        w: &[f64],
        batch_size: usize,
        rng: &mut R,
        out: &mut [f64],
        scratch: &mut Vec<usize>,
    ) {
        let idx = &self.partition.client_indices[k];
        scratch.clear();
        scratch.extend((0..batch_size).map(|_| idx[rng.random_range(0..idx.len())]));
        self.batch_loss_grad(w, scratch, out);
    }

    /// (mean loss, accuracy) over the train or test split.
    pub fn evaluate(&self, w: &[f64], test: bool) -> (f64, f64) {
        let n = if test { self.test_y.len() } else { self.train_y.len() };
        let mut hb = Vec::new();
        let mut lg = Vec::new();
        let mut loss = 0.0;
        let mut correct = 0usize;
        for i in 0..n {
            let (x, y) = self.features(test, i);
            let (l, pred) = self.sample_pass(w, x, y, None, &mut hb, &mut lg);
            loss += l;
            correct += usize::from(pred == y);
        }
        (loss / n as f64, correct as f64 / n as f64)
    }
}
