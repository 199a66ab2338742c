use std::f64::consts::PI;

use super::eig_sym;
use crate::kernels::{Activation, KernelMatrix};
use crate::{Error, Result};

/// Activation constants `c_{p, sigma}`, with caller-supplied entries
/// taking precedence over the built-in ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstantTable {
    overrides: Vec<(u32, Activation, f64)>,
}

impl ConstantTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, p_degree: u32, activation: Activation, value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::invalid(format!("activation constant {value} must be positive")));
        }
        self.overrides.retain(|&(p, a, _)| (p, a) != (p_degree, activation));
        self.overrides.push((p_degree, activation, value));
        Ok(self)
    }

    pub fn get(&self, p_degree: u32, activation: Activation) -> Result<f64> {
        if let Some(&(_, _, v)) = self
            .overrides
            .iter()
            .find(|&&(p, a, _)| (p, a) == (p_degree, activation))
        {
            return Ok(v);
        }
        activation_constant(p_degree, activation)
    }
}

/// Built-in constants: quadratic targets with quadratic or ReLU activations.
pub fn activation_constant(p_degree: u32, activation: Activation) -> Result<f64> {
    match (p_degree, activation) {
        (2, Activation::Quadratic) => Ok(1.0),
        (2, Activation::Relu) => Ok(1.0 / (2.0 * PI)),
        _ => Err(Error::UnsupportedConstant {
            p_degree,
            activation: activation.to_string(),
        }),
    }
}

/// `||u0 - u*||^2 / (2 kappa t)` with `kappa = lambda_max / lambda_min`.
pub fn thm2_rate_bound(h: &KernelMatrix, u0: &[f64], ustar: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::invalid(format!("time {t} must be positive")));
    }
    if u0.len() != h.dim() || ustar.len() != h.dim() {
        return Err(Error::invalid("vector lengths must match the kernel"));
    }
    let r = eig_sym(h, None)?;
    if !(r.lambda_min() > 0.0) {
        return Err(Error::SingularKernel {
            lambda_min: r.lambda_min(),
        });
    }
    let gap: f64 = u0.iter().zip(ustar).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(gap / (2.0 * r.condition_number * t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thm3Point {
    pub t: f64,
    pub gnn: f64,
    pub mlp: f64,
}

/// `gnn(t) = exp(-c sum(lambda) t) ||beta||^p` and
/// `mlp(t) = n exp(-c min(lambda) t) ||beta||^p`.
pub fn thm3_bounds(lambdas: &[f64], beta_norm: f64, p_degree: u32, c: f64, times: &[f64]) -> Result<Vec<Thm3Point>> {
    if lambdas.is_empty() {
        return Err(Error::invalid("need at least one eigenvalue"));
    }
    if lambdas.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
        return Err(Error::invalid("eigenvalues must be finite and non-negative"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("activation constant must be positive"));
    }
    if !(beta_norm >= 0.0 && beta_norm.is_finite()) {
        return Err(Error::invalid("beta norm must be finite and non-negative"));
    }
    if times.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::invalid("times must be non-negative"));
    }
    let n = lambdas.len() as f64;
    let sum: f64 = lambdas.iter().sum();
    let min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = beta_norm.powi(p_degree as i32);
    Ok(times
        .iter()
        .map(|&t| Thm3Point {
            t,
            gnn: (-c * sum * t).exp() * scale,
            mlp: n * (-c * min * t).exp() * scale,
        })
        .collect())
}

/// `sqrt(y^T H^+ y tr(H)) / m + sqrt(ln(1/delta) / m)`.
///
/// Eigenvalues below `1e-10 lambda_max` are left out of the pseudo-inverse;
/// labels with more than `1e-6 ||y||` outside the remaining range are rejected.
pub fn generalization_bound(h: &KernelMatrix, y: &[f64], m: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta {delta} must lie in (0, 1)")));
    }
    if m != h.dim() || y.len() != m {
        return Err(Error::invalid(format!(
            "m = {m} with a {}-dimensional kernel and {} labels",
            h.dim(),
            y.len()
        )));
    }
    let r = eig_sym(h, Some(y))?;
    let cutoff = 1e-10 * r.lambda_max();
    let align = r.alignment.as_ref().expect("labels supplied");
    let mut quad = 0.0;
    let mut outside = 0.0;
    for (&l, &a) in r.eigenvalues.iter().zip(align) {
        if l > cutoff && l > 0.0 {
            quad += a / l;
        } else {
            outside += a;
        }
    }
    let ynorm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let residual = outside.sqrt();
    if residual > 1e-6 * ynorm {
        return Err(Error::RangeViolation {
            residual,
            allowed: 1e-6 * ynorm,
        });
    }
    let m = m as f64;
    Ok((quad * r.trace).sqrt() / m + ((1.0 / delta).ln() / m).sqrt())
}
