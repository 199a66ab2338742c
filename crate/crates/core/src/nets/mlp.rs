use std::borrow::Cow;

use super::{affine, affine_backward, he_normal, sigmoid, standardize, Input, Model};
use crate::rng::{domain, stream, Stream};
use crate::{Error, Result};

/// A stack of affine layers with ReLU between them and a linear output,
/// reading its weights from a slice of a larger parameter vector.
///
/// Each layer stores its `out x in` weight matrix row-major, then its bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Dense {
    sizes: Vec<usize>,
}

impl Dense {
    pub(crate) fn new(sizes: Vec<usize>) -> Self {
        debug_assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        Self { sizes }
    }

    pub(crate) fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub(crate) fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub(crate) fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub(crate) fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Length of the activation buffer used by `forward`.
    pub(crate) fn acts_len(&self) -> usize {
        self.sizes[1..].iter().sum()
    }

    /// He-normal weights, zero biases.
    pub(crate) fn init(&self, rng: &mut Stream, params: &mut [f64]) {
        let mut off = 0;
        for w in self.sizes.windows(2) {
            let (fan_in, out) = (w[0], w[1]);
            he_normal(rng, fan_in, &mut params[off..off + fan_in * out]);
            off += fan_in * out;
            params[off..off + out].fill(0.0);
            off += out;
        }
    }

    /// Fills `acts` with every layer's output (post-ReLU for hidden layers,
    /// raw for the last). The network output is the final segment.
    pub(crate) fn forward(&self, params: &[f64], x: &[f64], acts: &mut [f64]) {
        let mut p_off = 0;
        let mut a_off = 0;
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[p_off..p_off + fan_in * out];
            let b = &params[p_off + fan_in * out..p_off + fan_in * out + out];
            let (prev, rest) = acts.split_at_mut(a_off);
            let input = if l == 0 { x } else { &prev[a_off - fan_in..] };
            let y = &mut rest[..out];
            affine(w, b, input, y);
            if l + 1 < layers {
                for v in y.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            p_off += fan_in * out + out;
            a_off += out;
        }
    }

    /// Accumulates parameter gradients for output cotangent `dout` and,
    /// if requested, the input gradient.
    pub(crate) fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        acts: &[f64],
        dout: &[f64],
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let layers = self.sizes.len() - 1;
        let mut p_offs = Vec::with_capacity(layers);
        let mut a_offs = Vec::with_capacity(layers);
        let (mut p, mut a) = (0, 0);
        for w in self.sizes.windows(2) {
            p_offs.push(p);
            a_offs.push(a);
            p += w[0] * w[1] + w[1];
            a += w[1];
        }
        let mut dy = dout.to_vec();
        let mut dx = dx;
        for l in (0..layers).rev() {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[p_offs[l]..p_offs[l] + fan_in * out];
            let (dw, rest) = grad[p_offs[l]..].split_at_mut(fan_in * out);
            let db = &mut rest[..out];
            if l == 0 {
                affine_backward(w, x, &dy, dw, db, dx.take());
            } else {
                let input = &acts[a_offs[l - 1]..a_offs[l - 1] + fan_in];
                let mut dinput = vec![0.0; fan_in];
                affine_backward(w, input, &dy, dw, db, Some(&mut dinput));
                for (d, &h) in dinput.iter_mut().zip(input) {
                    if h <= 0.0 {
                        *d = 0.0;
                    }
                }
                dy = dinput;
            }
        }
    }
}

/// Fully connected power-control baseline: flattened `(|H|, w)` in, one
/// sigmoid-squashed power per user out. Every layer is trained.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMlp {
    dense: Dense,
    params: Vec<f64>,
}

impl PowerMlp {
    pub fn new(input_dim: usize, hidden: &[usize], outputs: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || outputs == 0 || hidden.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(outputs);
        let dense = Dense::new(sizes);
        let mut params = vec![0.0; dense.num_params()];
        dense.init(&mut stream(seed, domain::NET_INIT, 1), &mut params);
        Ok(Self { dense, params })
    }

    /// Network for `k` users: input length `k^2 + k`, `k` outputs.
    pub fn for_users(k: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        Self::new(k * k + k, hidden, k, seed)
    }

    /// Picks the common width of `layers` hidden layers whose parameter
    /// count is closest to `target`.
    pub fn matched_width(k: usize, layers: usize, target: usize) -> usize {
        let count = |h: usize| {
            let mut sizes = vec![k * k + k];
            sizes.extend(std::iter::repeat_n(h, layers));
            sizes.push(k);
            Dense::new(sizes).num_params()
        };
        let mut best = 1;
        for h in 1..=target.max(1) {
            let c = count(h);
            if c.abs_diff(target) < count(best).abs_diff(target) {
                best = h;
            }
            if c > target {
                break;
            }
        }
        best
    }

    pub fn from_params(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        let dense = Dense::new(sizes);
        if params.len() != dense.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                dense.num_params(),
                params.len()
            )));
        }
        Ok(Self { dense, params })
    }

    pub fn sizes(&self) -> &[usize] {
        self.dense.sizes()
    }

    /// Vectors are used as given. Channel instances are flattened with
    /// standardized magnitudes followed by the raw weights.
    fn resolve<'a>(&self, input: &'a Input<'a>) -> Result<Cow<'a, [f64]>> {
        let x: Cow<[f64]> = match input {
            Input::Vector(v) => Cow::Borrowed(*v),
            Input::Network(s) => {
                let k = s.instance.users();
                let mut x = s.flat.0.clone();
                for v in &mut x[..k * k] {
                    *v = standardize(*v);
                }
                Cow::Owned(x)
            }
        };
        if x.len() != self.dense.input_dim() {
            return Err(Error::invalid(format!(
                "input of length {} for an MLP expecting {}",
                x.len(),
                self.dense.input_dim()
            )));
        }
        Ok(x)
    }
}

impl Model for PowerMlp {
    /// Layer activations followed by the sigmoid outputs.
    type Cache = Vec<f64>;

    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward_cached(&self, input: &Input<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.resolve(input)?;
        let mut acts = vec![0.0; self.dense.acts_len()];
        self.dense.forward(&self.params, &x, &mut acts);
        let k = self.dense.output_dim();
        let out: Vec<f64> = acts[acts.len() - k..].iter().map(|&v| sigmoid(v)).collect();
        Ok((out, acts))
    }

    fn backward(&self, input: &Input<'_>, acts: &Vec<f64>, cotangent: &[f64], grad: &mut [f64]) {
        let x = self.resolve(input).expect("input validated in forward");
        let k = self.dense.output_dim();
        let dout: Vec<f64> = acts[acts.len() - k..]
            .iter()
            .zip(cotangent)
            .map(|(&z, &g)| {
                let s = sigmoid(z);
                g * s * (1.0 - s)
            })
            .collect();
        self.dense.backward(&self.params, &x, acts, &dout, grad, None);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{apply_permutation, rayleigh_instance, Permutation, PowerAllocation, PreparedInstance};

    #[test]
    fn dense_gradient_matches_finite_differences() {
        let dense = Dense::new(vec![3, 5, 4, 2]);
        let mut params = vec![0.0; dense.num_params()];
        dense.init(&mut stream(1, domain::MISC, 0), &mut params);
        let x = [0.4, -1.2, 0.7];
        let dout = [0.3, -0.8];
        let f = |p: &[f64], x: &[f64]| {
            let mut acts = vec![0.0; dense.acts_len()];
            dense.forward(p, x, &mut acts);
            let o = &acts[acts.len() - 2..];
            o[0] * dout[0] + o[1] * dout[1]
        };
        let mut acts = vec![0.0; dense.acts_len()];
        dense.forward(&params, &x, &mut acts);
        let mut grad = vec![0.0; params.len()];
        let mut dx = vec![0.0; 3];
        dense.backward(&params, &x, &acts, &dout, &mut grad, Some(&mut dx));
        let h = 1e-6;
        for i in 0..params.len() {
            let mut a = params.clone();
            let mut b = params.clone();
            a[i] += h;
            b[i] -= h;
            assert!((grad[i] - (f(&a, &x) - f(&b, &x)) / (2.0 * h)).abs() < 1e-7, "param {i}");
        }
        for i in 0..3 {
            let mut a = x;
            let mut b = x;
            a[i] += h;
            b[i] -= h;
            assert!((dx[i] - (f(&params, &a) - f(&params, &b)) / (2.0 * h)).abs() < 1e-7);
        }
    }

    #[test]
    fn outputs_are_powers() {
        let net = PowerMlp::for_users(4, &[16, 16], 3).unwrap();
        let s = PreparedInstance::new(rayleigh_instance(4, 1, 0));
        let p = net.forward(&Input::Network(&s)).unwrap();
        assert_eq!(p.len(), 4);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn matched_width_is_within_ten_percent() {
        for (k, target) in [(5, 4674), (20, 4674), (10, 20_000)] {
            let h = PowerMlp::matched_width(k, 2, target);
            let n = PowerMlp::for_users(k, &[h, h], 0).unwrap().num_params();
            assert!((n as f64 - target as f64).abs() <= 0.1 * target as f64, "k={k}: {n}");
        }
    }

    #[test]
    fn flat_mlp_is_not_permutation_invariant() {
        // Randomized search: the readout sum of outputs changes under relabeling.
        let k = 5;
        let net = PowerMlp::for_users(k, &[32, 32], 11).unwrap();
        let mut rng = stream(3, domain::MISC, 0);
        let mut worst: f64 = 0.0;
        for j in 0..100 {
            let inst = rayleigh_instance(k, 9, j);
            let pi = Permutation::random(k, &mut rng);
            let (permuted, _) = apply_permutation(&inst, &PowerAllocation::full(k), &pi).unwrap();
            let a: f64 = net.forward(&Input::Network(&PreparedInstance::new(inst))).unwrap().iter().sum();
            let b: f64 = net.forward(&Input::Network(&PreparedInstance::new(permuted))).unwrap().iter().sum();
            worst = worst.max((a - b).abs());
        }
        assert!(worst > 0.01, "largest change {worst}");
    }

    #[test]
    fn rejects_wrong_input_length() {
        let net = PowerMlp::new(6, &[4], 2, 0).unwrap();
        assert!(net.forward(&Input::Vector(&[1.0; 5])).is_err());
        assert!(PowerMlp::new(6, &[0], 2, 0).is_err());
    }
}
