//! Synthetic permutation-invariant regression targets
//! `y = sum_i (beta . x_i)^p` over the nodes of each sample.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::Dataset;
use crate::rng::{domain, stream};
use crate::{Error, Result};

/// Anything that exposes per-sample node feature rows.
pub trait NodeFeatures {
    fn samples(&self) -> usize;
    fn node_dim(&self) -> usize;
    /// Row-major `nodes x node_dim` features of sample `j`.
    fn node_rows(&self, j: usize) -> Vec<f64>;
}

/// `m` samples of `n` nodes with i.i.d. standard Gaussian `d`-dim features.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNodeSet {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    data: Vec<f64>,
}

impl GaussianNodeSet {
    pub fn from_data(m: usize, n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 || d == 0 {
            return Err(Error::invalid("node set dimensions must be positive"));
        }
        if data.len() != m * n * d {
            return Err(Error::invalid(format!(
                "expected {} values for {m} x {n} x {d}, got {}",
                m * n * d,
                data.len()
            )));
        }
        Ok(Self { m, n, d, data })
    }

    /// Flattened features of sample `j` (length `n * d`).
    pub fn sample(&self, j: usize) -> &[f64] {
        let len = self.n * self.d;
        &self.data[j * len..(j + 1) * len]
    }

    /// Every sample flattened, as used by the flat MLP.
    pub fn flattened(&self) -> Vec<Vec<f64>> {
        (0..self.m).map(|j| self.sample(j).to_vec()).collect()
    }

    /// The same set with every node feature scaled to unit Euclidean norm.
    /// Zero rows are left as they are.
    pub fn unit_nodes(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.d) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        Self { data, ..*self }
    }

    pub fn prefix(&self, m: usize) -> Self {
        let m = m.min(self.m);
        Self {
            m,
            n: self.n,
            d: self.d,
            data: self.data[..m * self.n * self.d].to_vec(),
        }
    }
}

impl NodeFeatures for GaussianNodeSet {
    fn samples(&self) -> usize {
        self.m
    }

    fn node_dim(&self) -> usize {
        self.d
    }

    fn node_rows(&self, j: usize) -> Vec<f64> {
        self.sample(j).to_vec()
    }
}

impl NodeFeatures for Dataset {
    fn samples(&self) -> usize {
        self.len()
    }

    fn node_dim(&self) -> usize {
        2
    }

    fn node_rows(&self, j: usize) -> Vec<f64> {
        self.samples[j]
            .graph
            .node_features()
            .into_iter()
            .flatten()
            .collect()
    }
}

/// Sample `j` depends only on `(n, d, seed, j)`.
pub fn generate_gaussian_nodes(m: usize, n: usize, d: usize, seed: u64) -> Result<GaussianNodeSet> {
    if m == 0 || n == 0 || d == 0 {
        return Err(Error::invalid(format!(
            "need m, n, d >= 1 (got m = {m}, n = {n}, d = {d})"
        )));
    }
    let data: Vec<f64> = (0..m as u64)
        .into_par_iter()
        .flat_map_iter(|j| {
            let mut rng = stream(seed, domain::GAUSSIAN_NODES, j);
            (0..n * d)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect::<Vec<f64>>()
        })
        .collect();
    GaussianNodeSet::from_data(m, n, d, data)
}

pub fn synthetic_labels<F: NodeFeatures + ?Sized>(
    ds: &F,
    beta: &[f64],
    p_degree: u32,
) -> Result<Vec<f64>> {
    let d = ds.node_dim();
    if beta.len() != d {
        return Err(Error::invalid(format!(
            "beta has dimension {}, node features have dimension {d}",
            beta.len()
        )));
    }
    if p_degree == 0 {
        return Err(Error::invalid("polynomial degree must be at least 1"));
    }
    Ok((0..ds.samples())
        .map(|j| {
            ds.node_rows(j)
                .chunks_exact(d)
                .map(|x| {
                    let dot: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
                    dot.powi(p_degree as i32)
                })
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::Permutation;

    #[test]
    fn zero_beta_gives_zero_labels() {
        let ds = generate_gaussian_nodes(10, 4, 3, 1).unwrap();
        let y = synthetic_labels(&ds, &[0.0; 3], 2).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_direction_returns_norm() {
        let beta = [3.0, 4.0];
        let x = vec![0.6, 0.8];
        let ds = GaussianNodeSet::from_data(1, 1, 2, x).unwrap();
        let y = synthetic_labels(&ds, &beta, 1).unwrap();
        assert!((y[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let ds = generate_gaussian_nodes(3, 2, 3, 1).unwrap();
        assert!(synthetic_labels(&ds, &[1.0, 2.0], 1).is_err());
        assert!(synthetic_labels(&ds, &[1.0, 2.0, 3.0], 0).is_err());
    }

    #[test]
    fn labels_are_invariant_to_node_order() {
        let ds = generate_gaussian_nodes(20, 6, 3, 9).unwrap();
        let beta = [0.3, -1.2, 0.7];
        let y = synthetic_labels(&ds, &beta, 3).unwrap();
        let mut rng = stream(1, domain::MISC, 0);
        let mut permuted = Vec::new();
        for j in 0..ds.m {
            let pi = Permutation::random(ds.n, &mut rng);
            permuted.extend(pi.apply_rows(ds.sample(j), ds.d));
        }
        let shuffled = GaussianNodeSet::from_data(ds.m, ds.n, ds.d, permuted).unwrap();
        let y2 = synthetic_labels(&shuffled, &beta, 3).unwrap();
        for (a, b) in y.iter().zip(&y2) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn unit_nodes_have_unit_norm_and_keep_direction() {
        let ds = generate_gaussian_nodes(5, 3, 4, 2).unwrap();
        let u = ds.unit_nodes();
        for (a, b) in ds.sample(0).chunks_exact(4).zip(u.sample(0).chunks_exact(4)) {
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nb - 1.0).abs() < 1e-14);
            for (x, y) in a.iter().zip(b) {
                assert!((x / na - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn channel_dataset_exposes_node_features() {
        let ds = crate::netsim::generate_instances(4, 3, 2).unwrap();
        let y = synthetic_labels(&ds, &[1.0, 0.0], 1).unwrap();
        // w = 1 for every node
        assert!(y.iter().all(|&v| (v - 4.0).abs() < 1e-12));
    }
}
