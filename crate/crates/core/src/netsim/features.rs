use super::NetworkInstance;

/// Flat MLP input: row-major `|H|` followed by the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatSample(pub Vec<f64>);

/// Fully connected graph view of an instance.
///
/// Node `k` carries `(w_k, |h_kk|)`. The ordered pair `(i, k)`, `i != k`,
/// carries `(|h_ik|, |h_ki|)`: the interference node `k` causes at `i` and
/// the interference `i` causes at `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    k: usize,
    magnitudes: Vec<f64>,
    weights: Vec<f64>,
}

impl GraphSample {
    pub fn nodes(&self) -> usize {
        self.k
    }

    pub fn node_feature(&self, k: usize) -> [f64; 2] {
        [self.weights[k], self.magnitudes[k * self.k + k]]
    }

    pub fn node_features(&self) -> Vec<[f64; 2]> {
        (0..self.k).map(|k| self.node_feature(k)).collect()
    }

    pub fn edge_feature(&self, i: usize, k: usize) -> [f64; 2] {
        debug_assert_ne!(i, k);
        [self.magnitudes[i * self.k + k], self.magnitudes[k * self.k + i]]
    }

    /// Edge features in `(k, i)` order, `k` major and `i != k`.
    pub fn edge_features(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.k * self.k.saturating_sub(1));
        for k in 0..self.k {
            for i in (0..self.k).filter(|&i| i != k) {
                out.push(self.edge_feature(i, k));
            }
        }
        out
    }

    /// `|h_{k,i}|` (receiver `k`, transmitter `i`).
    pub fn magnitude(&self, k: usize, i: usize) -> f64 {
        self.magnitudes[k * self.k + i]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }
}

pub fn featurize(inst: &NetworkInstance) -> (FlatSample, GraphSample) {
    let k = inst.users();
    let magnitudes: Vec<f64> = inst.channels().iter().map(|c| c.norm()).collect();
    let mut flat = Vec::with_capacity(k * k + k);
    flat.extend_from_slice(&magnitudes);
    flat.extend_from_slice(inst.weights());
    (
        FlatSample(flat),
        GraphSample {
            k,
            magnitudes,
            weights: inst.weights().to_vec(),
        },
    )
}
