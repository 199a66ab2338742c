//! Neural tangent kernels of two-layer networks.
//!
//! The network is `f(x) = r^{-1/2} sum_r a_r sigma(w_r . x)` with Gaussian
//! first-layer weights and frozen `a_r = +-1`; only `W` is trained. Its
//! tangent kernel has the closed form `H(x, z) = (x . z) E[sigma'(w.x) sigma'(w.z)]`.
//! The permutation-invariant variant applies one such network to every
//! node and sums the outputs, so its kernel is the sum of the base kernel
//! over all node pairs.

mod analytic;
mod empirical;
pub mod io;
mod mc;

pub use analytic::{analytic_ntk_gnn, analytic_ntk_mlp, base_kernel};
pub use empirical::{empirical_ntk, jacobian};
pub use mc::mc_ntk;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    /// `sigma(u) = u^2`
    Quadratic,
}

impl Activation {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Activation::Relu => u.max(0.0),
            Activation::Quadratic => u * u,
        }
    }

    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Quadratic => 2.0 * u,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Quadratic => "quadratic",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "quadratic" | "square" => Ok(Activation::Quadratic),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// One network on the flattened input.
    FlatMlp,
    /// A shared network on every `node_dim`-sized block, summed.
    PermInvGnn { node_dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchSpec {
    pub family: Family,
    pub activation: Activation,
    /// Total input length per sample (nodes times node dimension for GNNs).
    pub input_dim: usize,
}

impl ArchSpec {
    pub fn flat(input_dim: usize, activation: Activation) -> Self {
        Self {
            family: Family::FlatMlp,
            activation,
            input_dim,
        }
    }

    pub fn perm_inv(nodes: usize, node_dim: usize, activation: Activation) -> Self {
        Self {
            family: Family::PermInvGnn { node_dim },
            activation,
            input_dim: nodes * node_dim,
        }
    }

    /// Dimension seen by each first-layer neuron.
    pub fn neuron_dim(&self) -> usize {
        match self.family {
            Family::FlatMlp => self.input_dim,
            Family::PermInvGnn { node_dim } => node_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        if let Family::PermInvGnn { node_dim } = self.family {
            if node_dim == 0 || !self.input_dim.is_multiple_of(node_dim) {
                return Err(Error::invalid(format!(
                    "input dimension {} is not a multiple of node dimension {node_dim}",
                    self.input_dim
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    AnalyticMlp,
    AnalyticGnn,
    MonteCarlo { draws: usize, width: usize },
    Empirical { params: usize },
    /// Read back from disk; the file formats do not record provenance.
    Imported,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::AnalyticMlp => write!(f, "analytic-mlp"),
            Provenance::AnalyticGnn => write!(f, "analytic-gnn"),
            Provenance::MonteCarlo { draws, width } => {
                write!(f, "monte-carlo(draws={draws},width={width})")
            }
            Provenance::Empirical { params } => write!(f, "empirical(params={params})"),
            Provenance::Imported => write!(f, "imported"),
        }
    }
}

/// A symmetric positive semidefinite Gram matrix over `m` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    provenance: Provenance,
}

impl KernelMatrix {
    /// Wraps a square matrix with finite entries. Symmetry and PSD-ness are
    /// checked separately by [`KernelMatrix::check_invariants`].
    pub fn new(entries: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::invalid(format!(
                "kernel must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("kernel has non-finite entries"));
        }
        Ok(Self {
            entries,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// `||self - other||_F / ||other||_F`.
    pub fn relative_frobenius_error(&self, reference: &KernelMatrix) -> f64 {
        (&self.entries - &reference.entries).norm() / reference.entries.norm()
    }

    /// Symmetry within `1e-10 max(1, |H_ij|)` and `lambda_min >= -1e-8 lambda_max`.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.dim();
        for i in 0..n {
            for j in (i + 1)..n {
                let a = self.entries[(i, j)];
                let b = self.entries[(j, i)];
                if (a - b).abs() > 1e-10 * a.abs().max(1.0) {
                    return Err(Error::invalid(format!(
                        "kernel not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        let eig = self.entries.clone().symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        if min < -1e-8 * max.abs() {
            return Err(Error::invalid(format!(
                "kernel not PSD: lambda_min = {min:e}, lambda_max = {max:e}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_samples<S: AsRef<[f64]>>(x: &[S], dim: Option<usize>) -> Result<usize> {
    let first = x
        .first()
        .ok_or_else(|| Error::invalid("need at least one sample"))?
        .as_ref()
        .len();
    let d = dim.unwrap_or(first);
    for (j, s) in x.iter().enumerate() {
        let s = s.as_ref();
        if s.len() != d {
            return Err(Error::invalid(format!(
                "sample {j} has dimension {}, expected {d}",
                s.len()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sample {j} has non-finite entries")));
        }
    }
    Ok(d)
}
