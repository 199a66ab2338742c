use super::mlp::Dense;
use super::{sigmoid, standardize, Input, Model};
use crate::netsim::{GraphSample, PreparedInstance};
use crate::rng::{domain, stream};
use crate::{Error, Result};

/// Message-passing power-control network.
///
/// Layer `j` computes, for every user `k`,
///
/// ```text
/// m_k = MAX_{i != k} MLP1_j(p_i, w_i, |h_ii|, |h_ik|, |h_ki|)
/// y_k = m_k - mean_l m_l
/// p_k = sigmoid(MLP2_j(y_k, w_k, |h_kk|))
/// ```
///
/// starting from `p = 1`. Channel magnitudes enter standardized. The maximum
/// is taken per coordinate; with a single user the neighborhood is empty and
/// `y_k = 0`. Centering removes the component shared by all users, without
/// which training often drives every output to full power at once and
/// stalls there. Weights are shared across users, so relabeling the users
/// relabels the output the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct WcgcnNet {
    hidden: usize,
    layers: usize,
    mlp1: Dense,
    mlp2: Dense,
    params: Vec<f64>,
}

pub(crate) const EDGE_IN: usize = 5;

/// Message input for the edge from `tx` into `rx`: the sender's state
/// `(p_i, w_i, |h_ii|)` followed by the edge features `(|h_ik|, |h_ki|)`.
fn edge_input(g: &GraphSample, p: &[f64], tx: usize, rx: usize) -> [f64; EDGE_IN] {
    let [w, hii] = g.node_feature(tx);
    let [f0, f1] = g.edge_feature(tx, rx);
    [p[tx], w, standardize(hii), standardize(f0), standardize(f1)]
}

pub struct WcgcnCache {
    layers: Vec<LayerCache>,
}

struct LayerCache {
    p_in: Vec<f64>,
    /// MLP1 activations per edge, receiver major.
    acts1: Vec<f64>,
    /// Winning edge slot per (node, coordinate); `u32::MAX` when empty.
    argmax: Vec<u32>,
    /// MLP2 inputs per node.
    z: Vec<f64>,
    acts2: Vec<f64>,
    p_out: Vec<f64>,
}

impl WcgcnNet {
    pub const DEFAULT_HIDDEN: usize = 32;
    pub const DEFAULT_LAYERS: usize = 2;

    pub fn new(hidden: usize, layers: usize, seed: u64) -> Result<Self> {
        if hidden == 0 || layers == 0 {
            return Err(Error::invalid("hidden width and layer count must be positive"));
        }
        let mlp1 = Dense::new(vec![EDGE_IN, hidden, hidden]);
        let mlp2 = Dense::new(vec![hidden + 2, hidden, 1]);
        let per_layer = mlp1.num_params() + mlp2.num_params();
        let mut params = vec![0.0; per_layer * layers];
        let mut rng = stream(seed, domain::NET_INIT, 2);
        for chunk in params.chunks_exact_mut(per_layer) {
            let (a, b) = chunk.split_at_mut(mlp1.num_params());
            mlp1.init(&mut rng, a);
            mlp2.init(&mut rng, b);
        }
        Ok(Self {
            hidden,
            layers,
            mlp1,
            mlp2,
            params,
        })
    }

    pub fn from_params(hidden: usize, layers: usize, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::new(hidden, layers, 0)?;
        if params.len() != net.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub(crate) fn mlp1_len(&self) -> usize {
        self.mlp1.num_params()
    }

    pub(crate) fn mlp2_len(&self) -> usize {
        self.mlp2.num_params()
    }

    fn layer_params(&self, j: usize) -> (&[f64], &[f64]) {
        let per = self.mlp1_len() + self.mlp2_len();
        self.params[j * per..(j + 1) * per].split_at(self.mlp1_len())
    }

    fn sample<'a>(input: &'a Input<'a>) -> Result<&'a PreparedInstance> {
        match input {
            Input::Network(s) => Ok(s),
            Input::Vector(_) => Err(Error::invalid("the graph network needs a channel instance")),
        }
    }

    fn layer_forward(&self, j: usize, s: &PreparedInstance, p_in: Vec<f64>) -> LayerCache {
        let g = &s.graph;
        let k = g.nodes();
        let h = self.hidden;
        let (w1, w2) = self.layer_params(j);
        let a1 = self.mlp1.acts_len();
        let a2 = self.mlp2.acts_len();
        let edges = k * (k - 1);
        let mut acts1 = vec![0.0; edges * a1];
        let mut argmax = vec![u32::MAX; k * h];
        let mut z = vec![0.0; k * (h + 2)];
        let mut acts2 = vec![0.0; k * a2];
        let mut p_out = vec![0.0; k];
        for rx in 0..k {
            let zk = &mut z[rx * (h + 2)..(rx + 1) * (h + 2)];
            for (slot, tx) in (0..k).filter(|&i| i != rx).enumerate() {
                let e = rx * (k - 1) + slot;
                let acts = &mut acts1[e * a1..(e + 1) * a1];
                self.mlp1.forward(w1, &edge_input(g, &p_in, tx, rx), acts);
                let msg = &acts[a1 - h..];
                for c in 0..h {
                    if argmax[rx * h + c] == u32::MAX || msg[c] > zk[c] {
                        zk[c] = msg[c];
                        argmax[rx * h + c] = slot as u32;
                    }
                }
            }
            let [wk, hkk] = g.node_feature(rx);
            zk[h] = wk;
            zk[h + 1] = standardize(hkk);
        }
        for c in 0..h {
            let mean = (0..k).map(|rx| z[rx * (h + 2) + c]).sum::<f64>() / k as f64;
            for rx in 0..k {
                z[rx * (h + 2) + c] -= mean;
            }
        }
        for rx in 0..k {
            let acts = &mut acts2[rx * a2..(rx + 1) * a2];
            self.mlp2.forward(w2, &z[rx * (h + 2)..(rx + 1) * (h + 2)], acts);
            p_out[rx] = sigmoid(acts[a2 - 1]);
        }
        LayerCache {
            p_in,
            acts1,
            argmax,
            z,
            acts2,
            p_out,
        }
    }

    /// Backpropagates `dp` (gradient w.r.t. this layer's output) and returns
    /// the gradient w.r.t. its input powers.
    fn layer_backward(
        &self,
        j: usize,
        s: &PreparedInstance,
        c: &LayerCache,
        dp: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let g = &s.graph;
        let k = g.nodes();
        let h = self.hidden;
        let (w1, w2) = self.layer_params(j);
        let per = self.mlp1_len() + self.mlp2_len();
        let (g1, g2) = grad[j * per..(j + 1) * per].split_at_mut(self.mlp1_len());
        let a1 = self.mlp1.acts_len();
        let a2 = self.mlp2.acts_len();
        let mut dp_in = vec![0.0; k];
        let mut dz = vec![0.0; k * h];
        let mut dzk = vec![0.0; h + 2];
        for rx in 0..k {
            let p = c.p_out[rx];
            let dpre = dp[rx] * p * (1.0 - p);
            if dpre == 0.0 {
                continue;
            }
            dzk.fill(0.0);
            self.mlp2.backward(
                w2,
                &c.z[rx * (h + 2)..(rx + 1) * (h + 2)],
                &c.acts2[rx * a2..(rx + 1) * a2],
                &[dpre],
                g2,
                Some(&mut dzk),
            );
            dz[rx * h..(rx + 1) * h].copy_from_slice(&dzk[..h]);
        }
        if k == 1 {
            return dp_in;
        }
        for ch in 0..h {
            let mean = (0..k).map(|rx| dz[rx * h + ch]).sum::<f64>() / k as f64;
            for rx in 0..k {
                dz[rx * h + ch] -= mean;
            }
        }
        let mut dm = vec![0.0; (k - 1) * h];
        for rx in 0..k {
            let dzr = &dz[rx * h..(rx + 1) * h];
            if dzr.iter().all(|&v| v == 0.0) {
                continue;
            }
            dm.fill(0.0);
            for ch in 0..h {
                let slot = c.argmax[rx * h + ch] as usize;
                dm[slot * h + ch] += dzr[ch];
            }
            for (slot, tx) in (0..k).filter(|&i| i != rx).enumerate() {
                let d = &dm[slot * h..(slot + 1) * h];
                if d.iter().any(|&v| v != 0.0) {
                    let e = rx * (k - 1) + slot;
                    let mut dx = [0.0; EDGE_IN];
                    self.mlp1.backward(
                        w1,
                        &edge_input(g, &c.p_in, tx, rx),
                        &c.acts1[e * a1..(e + 1) * a1],
                        d,
                        g1,
                        Some(&mut dx),
                    );
                    dp_in[tx] += dx[0];
                }
            }
        }
        dp_in
    }
}

impl Model for WcgcnNet {
    type Cache = WcgcnCache;

    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward_cached(&self, input: &Input<'_>) -> Result<(Vec<f64>, WcgcnCache)> {
        let s = Self::sample(input)?;
        let mut p = vec![1.0; s.graph.nodes()];
        let mut layers = Vec::with_capacity(self.layers);
        for j in 0..self.layers {
            let c = self.layer_forward(j, s, p);
            p = c.p_out.clone();
            layers.push(c);
        }
        Ok((p, WcgcnCache { layers }))
    }

    fn backward(&self, input: &Input<'_>, cache: &WcgcnCache, cotangent: &[f64], grad: &mut [f64]) {
        let s = Self::sample(input).expect("input validated in forward");
        let mut dp = cotangent.to_vec();
        for j in (0..self.layers).rev() {
            dp = self.layer_backward(j, s, &cache.layers[j], &dp, grad);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{apply_permutation, rayleigh_instance, Permutation, PowerAllocation};
    use crate::rng::{domain, stream};

    fn prepared(k: usize, j: u64) -> PreparedInstance {
        PreparedInstance::new(rayleigh_instance(k, 5, j))
    }

    #[test]
    fn single_user_output_is_a_power() {
        let net = WcgcnNet::new(8, 2, 1).unwrap();
        let p = net.forward(&Input::Network(&prepared(1, 0))).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0] > 0.0 && p[0] < 1.0);
    }

    #[test]
    fn permutation_equivariance() {
        let net = WcgcnNet::new(16, 2, 3).unwrap();
        let mut rng = stream(1, domain::MISC, 0);
        for j in 0..20 {
            let s = prepared(5, j);
            let pi = Permutation::random(5, &mut rng);
            let (inst, _) = apply_permutation(&s.instance, &PowerAllocation::full(5), &pi).unwrap();
            let a = net.forward(&Input::Network(&s)).unwrap();
            let b = net.forward(&Input::Network(&PreparedInstance::new(inst))).unwrap();
            for (x, y) in pi.apply(&a).iter().zip(&b) {
                assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn messages_are_centered_across_users() {
        let net = WcgcnNet::new(6, 2, 3).unwrap();
        let s = prepared(5, 2);
        let (_, cache) = net.forward_cached(&Input::Network(&s)).unwrap();
        for c in &cache.layers {
            for ch in 0..6 {
                let sum: f64 = (0..5).map(|rx| c.z[rx * 8 + ch]).sum();
                assert!(sum.abs() < 1e-12, "channel {ch} sums to {sum}");
            }
        }
    }

    #[test]
    fn losing_edges_get_no_gradient() {
        // With width 1 each receiver keeps one of its two incoming edges;
        // poisoning the cached activations of the other must not matter.
        let net = WcgcnNet::new(1, 1, 7).unwrap();
        let s = prepared(3, 1);
        let (_, cache) = net.forward_cached(&Input::Network(&s)).unwrap();
        let c = &cache.layers[0];
        let mut grad = vec![0.0; net.num_params()];
        net.backward(&Input::Network(&s), &cache, &[1.0, -0.5, 0.25], &mut grad);
        let mut poisoned = WcgcnCache {
            layers: vec![LayerCache {
                p_in: c.p_in.clone(),
                acts1: c.acts1.clone(),
                argmax: c.argmax.clone(),
                z: c.z.clone(),
                acts2: c.acts2.clone(),
                p_out: c.p_out.clone(),
            }],
        };
        let a1 = net.mlp1.acts_len();
        for rx in 0..3 {
            let winner = c.argmax[rx] as usize;
            let loser = 1 - winner;
            let e = rx * 2 + loser;
            poisoned.layers[0].acts1[e * a1..(e + 1) * a1].fill(f64::NAN);
        }
        let mut grad2 = vec![0.0; net.num_params()];
        net.backward(&Input::Network(&s), &poisoned, &[1.0, -0.5, 0.25], &mut grad2);
        assert_eq!(grad, grad2);
    }

    #[test]
    fn rejects_vector_input() {
        let net = WcgcnNet::new(4, 1, 0).unwrap();
        assert!(net.forward(&Input::Vector(&[1.0, 2.0])).is_err());
        assert!(WcgcnNet::new(0, 1, 0).is_err());
    }
}
