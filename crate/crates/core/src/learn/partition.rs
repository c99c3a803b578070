use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// Per-client sample indices over a shared training set.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPartition {
    pub client_indices: Vec<Vec<usize>>,
    /// Concentration used to draw the split; `None` for an IID split.
    pub dirichlet_alpha: Option<f64>,
}

impl DataPartition {
    pub fn num_clients(&self) -> usize {
        self.client_indices.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.client_indices.iter().map(Vec::len).collect()
    }

    /// Checks disjointness and coverage of `0..n`.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for idx in self.client_indices.iter().flatten() {
            if *idx >= n || seen[*idx] {
                return false;
            }
            seen[*idx] = true;
        }
        seen.into_iter().all(|s| s)
    }

    /// Per-client class histograms normalized to distributions.
    pub fn class_distributions(&self, labels: &[usize], num_classes: usize) -> Vec<Vec<f64>> {
        self.client_indices
            .iter()
            .map(|idx| {
                let mut h = vec![0.0; num_classes];
                for &i in idx {
                    h[labels[i]] += 1.0;
                }
                let n = idx.len().max(1) as f64;
                h.iter_mut().for_each(|v| *v /= n);
                h
            })
            .collect()
    }
}

fn check(labels: &[usize], num_clients: usize) -> Result<()> {
    if num_clients == 0 {
        return Err(Error::Input("partition needs at least one client".into()));
    }
    if labels.len() < num_clients {
        return Err(Error::Input(format!(
            "{} samples cannot cover {num_clients} clients",
            labels.len()
        )));
    }
    Ok(())
}

/// Shuffled equal split.
pub fn iid_partition<R: Rng + ?Sized>(
    labels: &[usize],
    num_clients: usize,
    rng: &mut R,
) -> Result<DataPartition> {
    check(labels, num_clients)?;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(rng);
    let mut client_indices = vec![Vec::new(); num_clients];
    for (j, i) in order.into_iter().enumerate() {
        client_indices[j % num_clients].push(i);
    }
    client_indices.iter_mut().for_each(|v| v.sort_unstable());
    Ok(DataPartition { client_indices, dirichlet_alpha: None })
}

/// Class-wise Dirichlet split: for every class a proportion vector over
/// clients is drawn from `Dir(alpha * 1_K)` and that class's samples are
/// dealt out accordingly. Draws that leave a client empty are redrawn.
pub fn dirichlet_partition<R: Rng + ?Sized>(
    labels: &[usize],
    num_clients: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<DataPartition> {
    check(labels, num_clients)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config("data.alpha", "Dirichlet concentration must be > 0"));
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Numerical(e.to_string()))?;

    const MAX_ATTEMPTS: usize = 1000;
    for _ in 0..MAX_ATTEMPTS {
        let mut client_indices = vec![Vec::new(); num_clients];
        for members in &by_class {
            let mut members = members.clone();
            members.shuffle(rng);
            let mut props: Vec<f64> = (0..num_clients).map(|_| gamma.sample(rng)).collect();
            let total: f64 = props.iter().sum();
            if total > 0.0 && total.is_finite() {
                props.iter_mut().for_each(|p| *p /= total);
            } else {
                // Every gamma draw underflowed; hand the whole class to one client.
                let pick = rng.random_range(0..num_clients);
                props = (0..num_clients).map(|k| f64::from(u8::from(k == pick))).collect();
            }
            let n = members.len();
            let mut start = 0usize;
            let mut cum = 0.0;
            for (k, p) in props.iter().enumerate() {
                cum += p;
                let end = if k + 1 == num_clients {
                    n
                } else {
                    ((cum * n as f64).round() as usize).clamp(start, n)
                };
                client_indices[k].extend_from_slice(&members[start..end]);
                start = end;
            }
        }
        if client_indices.iter().all(|v| !v.is_empty()) {
            client_indices.iter_mut().for_each(|v| v.sort_unstable());
            return Ok(DataPartition { client_indices, dirichlet_alpha: Some(alpha) });
        }
    }
    Err(Error::Numerical(format!(
        "no Dirichlet draw gave every client a sample after {MAX_ATTEMPTS} attempts"
    )))
}

/// Mean total-variation distance between each client's class distribution
/// and the pooled one.
pub fn mean_label_skew(partition: &DataPartition, labels: &[usize], num_classes: usize) -> f64 {
    let mut global = vec![0.0; num_classes];
    for &y in labels {
        global[y] += 1.0 / labels.len() as f64;
    }
    let dists = partition.class_distributions(labels, num_classes);
    let total: f64 = dists
        .iter()
        .map(|d| 0.5 * d.iter().zip(&global).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .sum();
    total / dists.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};

    fn labels(n: usize, classes: usize) -> Vec<usize> {
        (0..n).map(|i| i % classes).collect()
    }

    #[test]
    fn single_client_owns_everything() {
        let y = labels(50, 10);
        let mut rng = substream(0, Purpose::Partition, 0, 0);
        let p = dirichlet_partition(&y, 1, 0.5, &mut rng).unwrap();
        assert_eq!(p.client_indices[0], (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn large_concentration_is_near_uniform() {
        let y = labels(8000, 10);
        let mut rng = substream(3, Purpose::Partition, 0, 0);
        let p = dirichlet_partition(&y, 4, 1e6, &mut rng).unwrap();
        for d in p.class_distributions(&y, 10) {
            for v in d {
                assert!((v - 0.1).abs() < 0.1 * 0.05, "{v}");
            }
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let mut rng = substream(0, Purpose::Partition, 0, 0);
        assert!(dirichlet_partition(&[0, 1, 2], 4, 0.5, &mut rng).is_err());
        assert!(dirichlet_partition(&[0, 1, 2], 2, 0.0, &mut rng).is_err());
    }

    #[test]
    fn smaller_concentration_is_more_skewed() {
        let y = labels(2000, 10);
        let mut skew = [0.0, 0.0];
        for seed in 0..20 {
            for (i, alpha) in [0.1, 0.5].into_iter().enumerate() {
                let mut rng = substream(seed, Purpose::Partition, i as u64, 0);
                let p = dirichlet_partition(&y, 4, alpha, &mut rng).unwrap();
                skew[i] += mean_label_skew(&p, &y, 10) / 20.0;
            }
        }
        assert!(skew[0] > skew[1], "{skew:?}");
    }

    #[test]
    fn iid_split_is_balanced() {
        let y = labels(103, 10);
        let mut rng = substream(0, Purpose::Partition, 0, 0);
        let p = iid_partition(&y, 4, &mut rng).unwrap();
        assert!(p.is_partition_of(103));
        let sizes = p.sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
