use std::borrow::Cow;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Input, Model};
use crate::kernels::{ArchSpec, Family};
use crate::rng::{domain, stream, Stream};
use crate::{Error, Result};

/// `f(x) = r^{-1/2} sum_r a_r sigma(w_r . x)` with `W ~ N(0, 1)` and frozen
/// signs `a_r = +-1`. Only `W` is a parameter.
///
/// With a [`Family::PermInvGnn`] architecture the same network is applied
/// to each node block and the outputs are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerNet {
    arch: ArchSpec,
    width: usize,
    w: Vec<f64>,
    a: Vec<f64>,
}

impl TwoLayerNet {
    pub fn init(arch: ArchSpec, width: usize, seed: u64) -> Result<Self> {
        Self::init_from_rng(arch, width, &mut stream(seed, domain::NET_INIT, 0))
    }

    pub fn init_from_rng(arch: ArchSpec, width: usize, rng: &mut Stream) -> Result<Self> {
        arch.validate()?;
        if width == 0 {
            return Err(Error::invalid("width must be at least 1"));
        }
        let d = arch.neuron_dim();
        let w = (0..width * d).map(|_| StandardNormal.sample(rng)).collect();
        let a = (0..width)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        Ok(Self { arch, width, w, a })
    }

    pub fn from_parts(arch: ArchSpec, w: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let width = a.len();
        if width == 0 || w.len() != width * arch.neuron_dim() {
            return Err(Error::invalid("weight shapes do not match the architecture"));
        }
        if a.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::invalid("output signs must be +-1"));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        Ok(Self { arch, width, w, a })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn signs(&self) -> &[f64] {
        &self.a
    }

    fn resolve<'a>(&self, input: &'a Input<'a>) -> Result<Cow<'a, [f64]>> {
        let x: Cow<[f64]> = match (input, self.arch.family) {
            (Input::Vector(v), _) => Cow::Borrowed(*v),
            (Input::Network(s), Family::FlatMlp) => Cow::Borrowed(&s.flat.0),
            (Input::Network(s), Family::PermInvGnn { .. }) => {
                Cow::Owned(s.graph.node_features().into_iter().flatten().collect())
            }
        };
        let ok = match self.arch.family {
            Family::FlatMlp => x.len() == self.arch.input_dim,
            Family::PermInvGnn { node_dim } => !x.is_empty() && x.len().is_multiple_of(node_dim),
        };
        if !ok {
            return Err(Error::invalid(format!(
                "input of length {} does not fit architecture {:?}",
                x.len(),
                self.arch
            )));
        }
        Ok(x)
    }
}

impl Model for TwoLayerNet {
    /// Pre-activations, node-major.
    type Cache = Vec<f64>;

    fn num_params(&self) -> usize {
        self.w.len()
    }

    fn params(&self) -> &[f64] {
        &self.w
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    fn forward_cached(&self, input: &Input<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.resolve(input)?;
        let d = self.arch.neuron_dim();
        let act = self.arch.activation;
        let mut pre = Vec::with_capacity(x.len() / d * self.width);
        let mut out = 0.0;
        for node in x.chunks_exact(d) {
            for (row, a) in self.w.chunks_exact(d).zip(&self.a) {
                let u: f64 = row.iter().zip(node).map(|(p, q)| p * q).sum();
                out += a * act.eval(u);
                pre.push(u);
            }
        }
        Ok((vec![out / (self.width as f64).sqrt()], pre))
    }

    fn backward(&self, input: &Input<'_>, pre: &Vec<f64>, cotangent: &[f64], grad: &mut [f64]) {
        let x = self.resolve(input).expect("input validated in forward");
        let d = self.arch.neuron_dim();
        let act = self.arch.activation;
        let scale = cotangent[0] / (self.width as f64).sqrt();
        for (node, pre_node) in x.chunks_exact(d).zip(pre.chunks_exact(self.width)) {
            for ((g, a), &u) in grad.chunks_exact_mut(d).zip(&self.a).zip(pre_node) {
                let s = scale * a * act.derivative(u);
                if s != 0.0 {
                    for (gi, xi) in g.iter_mut().zip(node) {
                        *gi += s * xi;
                    }
                }
            }
        }
    }
}
