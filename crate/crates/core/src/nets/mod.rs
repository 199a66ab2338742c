//! Finite-width networks with hand-written reverse-mode gradients.
//!
//! Every network exposes its parameters as one flat vector. A forward pass
//! returns the outputs together with a cache of intermediate activations;
//! `backward` consumes the cache and accumulates `J^T * cotangent` into a
//! gradient buffer.

pub mod checkpoint;
mod mlp;
mod train;
mod two_layer;
mod wcgcn;

pub use mlp::PowerMlp;
pub use train::{
    epochs_to_threshold, evaluate, evaluate_policy, loss_and_gradient, mean_loss, policy_rates,
    train, EvalMetrics, FullPowerPolicy, LossKind, NetPolicy, Optimizer, Policy, TraceRow,
    TrainConfig, TrainTrace, WmmsePolicy, DIVERGENCE_LOSS,
};
pub use two_layer::TwoLayerNet;
pub use wcgcn::WcgcnNet;

use crate::netsim::{Dataset, PreparedInstance};
use crate::rng::Stream;
use crate::{Error, Result};

/// What a network is applied to.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    /// A raw real vector (synthetic NTK experiments).
    Vector(&'a [f64]),
    /// A channel instance with its cached featurizations.
    Network(&'a PreparedInstance),
}

pub trait Model: Send + Sync {
    type Cache: Send;

    fn num_params(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn forward_cached(&self, input: &Input<'_>) -> Result<(Vec<f64>, Self::Cache)>;

    /// Accumulate `J^T cotangent` into `grad` (length `num_params`).
    fn backward(&self, input: &Input<'_>, cache: &Self::Cache, cotangent: &[f64], grad: &mut [f64]);

    fn forward(&self, input: &Input<'_>) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.0)
    }
}

/// Labelled or unlabelled training examples.
pub trait ExampleSource: Sync {
    fn len(&self) -> usize;
    fn input(&self, j: usize) -> Input<'_>;
    fn label(&self, j: usize) -> Option<f64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ExampleSource for Dataset {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn input(&self, j: usize) -> Input<'_> {
        Input::Network(&self.samples[j])
    }

    fn label(&self, j: usize) -> Option<f64> {
        self.labels.as_ref().map(|l| l[j])
    }
}

/// Real vectors with scalar labels.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl VectorDataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::invalid(format!(
                "{} samples with {} labels",
                x.len(),
                y.len()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn inputs(&self) -> Vec<Input<'_>> {
        self.x.iter().map(|v| Input::Vector(v)).collect()
    }
}

impl ExampleSource for VectorDataset {
    fn len(&self) -> usize {
        self.x.len()
    }

    fn input(&self, j: usize) -> Input<'_> {
        Input::Vector(&self.x[j])
    }

    fn label(&self, j: usize) -> Option<f64> {
        Some(self.y[j])
    }
}

pub(crate) fn he_normal(rng: &mut Stream, fan_in: usize, out: &mut [f64]) {
    use rand_distr::{Distribution, Normal};
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    for v in out {
        *v = dist.sample(rng);
    }
}

/// Mean and standard deviation of a Rayleigh magnitude with unit second moment.
pub const RAYLEIGH_MEAN: f64 = 0.886_226_925_452_758;
pub const RAYLEIGH_STD: f64 = 0.463_251_375_176_104_3;

/// Centers and scales a channel magnitude. The power-control networks see
/// standardized magnitudes; without this every hidden unit receives a large
/// common offset and training tends to saturate the output sigmoid.
#[inline]
pub(crate) fn standardize(h: f64) -> f64 {
    (h - RAYLEIGH_MEAN) / RAYLEIGH_STD
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out = W x + b` for a row-major `rows x cols` matrix.
#[inline]
pub(crate) fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = b[r] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

/// `dw += dy x^T`, `db += dy`, `dx += W^T dy`.
#[inline]
pub(crate) fn affine_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let cols = x.len();
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db[r] += g;
        for (d, &xv) in dw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *d += g * xv;
        }
    }
    if let Some(dx) = dx {
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (d, &wv) in dx.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                *d += g * wv;
            }
        }
    }
}
