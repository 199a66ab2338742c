use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{ExampleSource, Input, Model};
use crate::netsim::{io::fmt_f64, sum_rate_gradient, wmmse, PreparedInstance, DEFAULT_WMMSE_ITERS, DEFAULT_WMMSE_TOL};
use crate::rng::{domain, stream};
use crate::{Error, Result};

/// Samples per work unit. Chunks are summed internally in order and then
/// combined in order, so results do not depend on the thread count.
const CHUNK: usize = 16;

/// Training stops with [`Error::Divergence`] above this loss.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `mean_j (s_j - y_j)^2 / 2` on the readout `s = sum of outputs`.
    Squared,
    /// Negative mean weighted sum rate of the output powers.
    NegSumRate,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Squared => "squared",
            LossKind::NegSumRate => "neg-sum-rate",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(LossKind::Squared),
            "neg-sum-rate" | "sum-rate" => Ok(LossKind::NegSumRate),
            other => Err(Error::invalid(format!("unknown loss '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Plain gradient descent.
    Gd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Optimizer::Gd => f.write_str("gd"),
            Optimizer::Adam { .. } => f.write_str("adam"),
        }
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" | "sgd" => Ok(Optimizer::Gd),
            "adam" => Ok(Optimizer::adam()),
            other => Err(Error::invalid(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub lr: f64,
    pub epochs: usize,
    pub loss: LossKind,
    /// Seeds minibatch shuffling.
    pub seed: u64,
    /// Record a trace row every this many epochs (the last epoch is always recorded).
    pub eval_every: usize,
    /// `None` trains full-batch: one step per epoch.
    pub batch_size: Option<usize>,
    /// Minibatch steps per epoch; `None` means one pass over the data.
    /// Batches are consecutive slices of a permutation that is redrawn
    /// after every pass.
    pub steps_per_epoch: Option<usize>,
    /// Fill `wall_ms` with elapsed time instead of zero.
    pub record_time: bool,
}

impl TrainConfig {
    pub fn new(optimizer: Optimizer, lr: f64, epochs: usize, loss: LossKind) -> Self {
        Self {
            optimizer,
            lr,
            epochs,
            loss,
            seed: 0,
            eval_every: 1,
            batch_size: None,
            steps_per_epoch: None,
            record_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // A zero rate is allowed: it freezes the network, which is useful as a control.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("evaluation cadence must be at least 1"));
        }
        if self.batch_size == Some(0) || self.steps_per_epoch == Some(0) {
            return Err(Error::invalid("batch size and steps per epoch must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub grad_norm: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    /// Free-form run facts (hyperparameters, final metrics).
    pub metadata: Vec<(String, String)>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.train_loss).collect()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// `epoch,train_loss,test_loss,grad_norm,wall_ms`; a missing test loss is an empty field.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,train_loss,test_loss,grad_norm,wall_ms")?;
        for r in &self.rows {
            let test = r.test_loss.map(fmt_f64).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch,
                fmt_f64(r.train_loss),
                test,
                fmt_f64(r.grad_norm),
                r.wall_ms.round()
            )?;
        }
        Ok(())
    }
}

struct Partial {
    loss: f64,
    grad: Vec<f64>,
}

fn sample_loss<M: Model>(
    net: &M,
    input: &Input<'_>,
    label: Option<f64>,
    loss: LossKind,
    scale: f64,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let (out, cache) = net.forward_cached(input)?;
    let (value, cot) = match loss {
        LossKind::Squared => {
            let y = label.ok_or_else(|| Error::invalid("squared loss needs labels"))?;
            let r = out.iter().sum::<f64>() - y;
            (0.5 * r * r, vec![r * scale; out.len()])
        }
        LossKind::NegSumRate => {
            let s = match input {
                Input::Network(s) => s,
                Input::Vector(_) => return Err(Error::invalid("sum-rate loss needs channel instances")),
            };
            let (rate, g) = sum_rate_gradient(&s.instance, &out);
            (-rate, g.into_iter().map(|v| -v * scale).collect())
        }
    };
    if let Some(grad) = grad {
        if value.is_finite() {
            net.backward(input, &cache, &cot, grad);
        }
    }
    Ok(value)
}

fn reduce<M: Model, D: ExampleSource + ?Sized>(
    net: &M,
    data: &D,
    idx: &[usize],
    loss: LossKind,
    with_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    if idx.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let scale = 1.0 / idx.len() as f64;
    let p = net.num_params();
    let partials: Vec<Result<Partial>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = if with_grad { vec![0.0; p] } else { Vec::new() };
            let mut total = 0.0;
            for &j in chunk {
                let g = if with_grad { Some(grad.as_mut_slice()) } else { None };
                let v = sample_loss(net, &data.input(j), data.label(j), loss, scale, g)?;
                if !v.is_finite() {
                    return Err(Error::NumericFailure { sample: j });
                }
                total += v;
            }
            Ok(Partial { loss: total, grad })
        })
        .collect();
    let mut loss_sum = 0.0;
    let mut grad = if with_grad { Some(vec![0.0; p]) } else { None };
    for part in partials {
        let part = part?;
        loss_sum += part.loss;
        if let Some(g) = grad.as_mut() {
            for (a, b) in g.iter_mut().zip(&part.grad) {
                *a += b;
            }
        }
    }
    Ok((loss_sum * scale, grad))
}

/// Mean loss over `idx` (all samples when `None`) and its gradient.
///
/// A non-finite per-sample loss yields [`Error::NumericFailure`] naming the
/// first such sample in index order.
pub fn loss_and_gradient<M: Model, D: ExampleSource + ?Sized>(
    net: &M,
    data: &D,
    idx: Option<&[usize]>,
    loss: LossKind,
) -> Result<(f64, Vec<f64>)> {
    let all: Vec<usize>;
    let idx = match idx {
        Some(i) => i,
        None => {
            all = (0..data.len()).collect();
            &all
        }
    };
    let (l, g) = reduce(net, data, idx, loss, true)?;
    Ok((l, g.expect("gradient requested")))
}

/// Mean loss over the whole dataset, forward passes only.
pub fn mean_loss<M: Model, D: ExampleSource + ?Sized>(net: &M, data: &D, loss: LossKind) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    Ok(reduce(net, data, &idx, loss, false)?.0)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn step(params: &mut [f64], grad: &[f64], cfg: &TrainConfig, adam: &mut AdamState) {
    match cfg.optimizer {
        Optimizer::Gd => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= cfg.lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            adam.t += 1;
            let c1 = 1.0 - beta1.powi(adam.t);
            let c2 = 1.0 - beta2.powi(adam.t);
            for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut adam.m).zip(&mut adam.v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// Trains `net` in place. Row 0 describes the initialization. With
/// full-batch training row `e` holds the exact loss after `e` epochs; with
/// minibatches it holds the mean minibatch loss since the previous row.
pub fn train<M, D, T>(net: &mut M, train_ds: &D, test_ds: Option<&T>, cfg: &TrainConfig) -> Result<TrainTrace>
where
    M: Model,
    D: ExampleSource + ?Sized,
    T: ExampleSource + ?Sized,
{
    cfg.validate()?;
    if train_ds.is_empty() || test_ds.is_some_and(|t| t.is_empty()) {
        return Err(Error::invalid("datasets must be nonempty"));
    }
    if cfg.loss == LossKind::Squared && (0..train_ds.len()).any(|j| train_ds.label(j).is_none()) {
        return Err(Error::invalid("squared loss needs labels"));
    }
    let start = Instant::now();
    let mut trace = TrainTrace::default();
    trace.set_meta("optimizer", cfg.optimizer);
    trace.set_meta("lr", cfg.lr);
    trace.set_meta("epochs", cfg.epochs);
    trace.set_meta("loss", cfg.loss);
    trace.set_meta("seed", cfg.seed);
    trace.set_meta("batch_size", cfg.batch_size.map_or("full".to_string(), |b| b.to_string()));
    if let Some(s) = cfg.steps_per_epoch {
        trace.set_meta("steps_per_epoch", s);
    }
    trace.set_meta("params", net.num_params());

    let m = train_ds.len();
    let full = cfg.batch_size.is_none_or(|b| b >= m);
    let mut order: Vec<usize> = (0..m).collect();
    let (mut cursor, mut pass, mut seen) = (0usize, 0u64, 0usize);
    let (mut acc_loss, mut acc_seen) = (0.0, 0usize);
    let mut adam = AdamState {
        m: vec![0.0; net.num_params()],
        v: vec![0.0; net.num_params()],
        t: 0,
    };

    let diverged = |trace: &TrainTrace, epoch, loss: f64| Error::Divergence {
        epoch,
        loss,
        trace: Box::new(trace.clone()),
    };
    let eval = |net: &M, trace: &TrainTrace, epoch: usize| -> Result<(f64, Vec<f64>)> {
        match loss_and_gradient(net, train_ds, None, cfg.loss) {
            Err(Error::NumericFailure { .. }) => Err(diverged(trace, epoch, f64::NAN)),
            other => other,
        }
    };
    let record = |net: &M, trace: &mut TrainTrace, epoch, train_loss: f64, grad_norm| -> Result<()> {
        if !train_loss.is_finite() || train_loss > DIVERGENCE_LOSS {
            return Err(diverged(trace, epoch, train_loss));
        }
        let test_loss = test_ds.map(|t| mean_loss(net, t, cfg.loss)).transpose()?;
        let wall_ms = if cfg.record_time {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        trace.rows.push(TraceRow {
            epoch,
            train_loss,
            test_loss,
            grad_norm,
            wall_ms,
        });
        Ok(())
    };
    let due = |e: usize| e.is_multiple_of(cfg.eval_every) || e == cfg.epochs;

    let (mut loss, mut grad) = eval(net, &trace, 0)?;
    record(net, &mut trace, 0, loss, norm(&grad))?;
    for epoch in 1..=cfg.epochs {
        if full {
            step(net.params_mut(), &grad, cfg, &mut adam);
            // The next step needs this gradient anyway; it also gives the
            // exact post-epoch loss.
            (loss, grad) = eval(net, &trace, epoch)?;
            if due(epoch) {
                record(net, &mut trace, epoch, loss, norm(&grad))?;
            } else if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                return Err(diverged(&trace, epoch, loss));
            }
        } else {
            let b = cfg.batch_size.unwrap();
            let steps = cfg.steps_per_epoch.unwrap_or(m.div_ceil(b));
            let (mut sq, mut weighted) = (0.0, 0.0);
            for _ in 0..steps {
                if cursor == 0 {
                    order.shuffle(&mut stream(cfg.seed, domain::SHUFFLE, pass));
                    pass += 1;
                }
                let batch = &order[cursor..(cursor + b).min(m)];
                cursor = if cursor + b >= m { 0 } else { cursor + b };
                let (l, g) = match loss_and_gradient(net, train_ds, Some(batch), cfg.loss) {
                    Err(Error::NumericFailure { .. }) => return Err(diverged(&trace, epoch, f64::NAN)),
                    other => other?,
                };
                if !l.is_finite() || l > DIVERGENCE_LOSS {
                    return Err(diverged(&trace, epoch, l));
                }
                sq += norm(&g).powi(2);
                weighted += l * batch.len() as f64;
                seen += batch.len();
                step(net.params_mut(), &g, cfg, &mut adam);
            }
            if due(epoch) {
                // Running mean of the minibatch losses since the last row,
                // as is customary for minibatch training curves.
                let l = weighted_total(&mut acc_loss, &mut acc_seen, weighted, seen);
                record(net, &mut trace, epoch, l, (sq / steps as f64).sqrt())?;
            } else {
                acc_loss += weighted;
                acc_seen += seen;
            }
            seen = 0;
        }
    }
    trace.set_meta("wall_ms_total", (start.elapsed().as_secs_f64() * 1e3).round());
    Ok(trace)
}

fn weighted_total(acc_loss: &mut f64, acc_seen: &mut usize, loss: f64, seen: usize) -> f64 {
    let l = (*acc_loss + loss) / (*acc_seen + seen) as f64;
    *acc_loss = 0.0;
    *acc_seen = 0;
    l
}

/// First recorded epoch whose excess loss `train_loss - baseline` is at most
/// `factor` times the excess at epoch 0.
pub fn epochs_to_threshold(trace: &TrainTrace, factor: f64, baseline: f64) -> Option<usize> {
    let first = trace.rows.first()?;
    let target = factor * (first.train_loss - baseline);
    trace
        .rows
        .iter()
        .find(|r| r.train_loss - baseline <= target)
        .map(|r| r.epoch)
}

/// A power-control rule.
pub trait Policy: Sync {
    fn powers(&self, sample: &PreparedInstance) -> Result<Vec<f64>>;
}

pub struct NetPolicy<'a, M: Model>(pub &'a M);

impl<M: Model> Policy for NetPolicy<'_, M> {
    fn powers(&self, sample: &PreparedInstance) -> Result<Vec<f64>> {
        self.0.forward(&Input::Network(sample))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WmmsePolicy {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for WmmsePolicy {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_WMMSE_ITERS,
            tol: DEFAULT_WMMSE_TOL,
        }
    }
}

impl Policy for WmmsePolicy {
    fn powers(&self, sample: &PreparedInstance) -> Result<Vec<f64>> {
        Ok(wmmse(&sample.instance, self.max_iters, self.tol)?.power.into_vec())
    }
}

pub struct FullPowerPolicy;

impl Policy for FullPowerPolicy {
    fn powers(&self, sample: &PreparedInstance) -> Result<Vec<f64>> {
        Ok(vec![1.0; sample.instance.users()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    /// Negative mean sum rate of the policy.
    pub mean_loss: f64,
    pub mean_sum_rate: f64,
    pub oracle_sum_rate: f64,
    /// Ratio of mean sum rates, policy over oracle.
    pub ratio_to_wmmse: f64,
    /// Mean excess loss over the oracle.
    pub e_gen: f64,
}

/// Per-sample sum rates of a policy, in sample order.
pub fn policy_rates<P: Policy + ?Sized>(policy: &P, samples: &[PreparedInstance]) -> Result<Vec<f64>> {
    samples
        .par_iter()
        .map(|s| {
            let p = policy.powers(s)?;
            Ok(sum_rate_gradient(&s.instance, &p).0)
        })
        .collect()
}

fn metrics(rates: &[f64], oracle: &[f64]) -> Result<EvalMetrics> {
    if rates.is_empty() || rates.len() != oracle.len() {
        return Err(Error::invalid("test set must be nonempty and match the oracle"));
    }
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let omean = oracle.iter().sum::<f64>() / n;
    let e_gen = rates.iter().zip(oracle).map(|(r, o)| o - r).sum::<f64>() / n;
    Ok(EvalMetrics {
        mean_loss: -mean,
        mean_sum_rate: mean,
        oracle_sum_rate: omean,
        ratio_to_wmmse: mean / omean,
        e_gen,
    })
}

/// Compares a policy with precomputed oracle rates.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    samples: &[PreparedInstance],
    oracle_rates: &[f64],
) -> Result<EvalMetrics> {
    metrics(&policy_rates(policy, samples)?, oracle_rates)
}

/// Compares a network with the WMMSE oracle on a test set.
pub fn evaluate<M: Model>(net: &M, test: &[PreparedInstance]) -> Result<EvalMetrics> {
    let oracle = policy_rates(&WmmsePolicy::default(), test)?;
    evaluate_policy(&NetPolicy(net), test, &oracle)
}
