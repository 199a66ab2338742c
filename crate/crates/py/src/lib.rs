//! Python bindings: channel instances and the sum-rate objective, tangent
//! kernels and their spectra, and the power-control networks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use ntklab::kernels::{self, Activation, ArchSpec, KernelMatrix, Provenance};
use ntklab::netsim::{self, PowerAllocation};
use ntklab::nets::{self, Input, LossKind, Model, Optimizer, TrainConfig};
use ntklab::spectral;

fn err(e: ntklab::Error) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for ntklab::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

fn activation(name: &str) -> PyResult<Activation> {
    name.parse().py()
}

fn to_kernel(h: Vec<Vec<f64>>) -> PyResult<KernelMatrix> {
    let m = h.len();
    if h.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("kernel must be a square list of rows"));
    }
    KernelMatrix::new(DMatrix::from_fn(m, m, |i, j| h[i][j]), Provenance::Imported).py()
}

fn from_kernel(k: &KernelMatrix) -> Vec<Vec<f64>> {
    (0..k.dim()).map(|i| (0..k.dim()).map(|j| k.get(i, j)).collect()).collect()
}

/// A K-user interference channel: `h[k][i]` is the channel from
/// transmitter `i` to receiver `k`.
#[pyclass(module = "ntklab_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct NetworkInstance {
    inner: netsim::NetworkInstance,
}

#[pymethods]
impl NetworkInstance {
    #[new]
    #[pyo3(signature = (h, weights=None, noise=None))]
    fn new(h: Vec<Vec<Complex64>>, weights: Option<Vec<f64>>, noise: Option<Vec<f64>>) -> PyResult<Self> {
        let k = h.len();
        if h.iter().any(|r| r.len() != k) {
            return Err(PyValueError::new_err("channel matrix must be K x K"));
        }
        let flat = h.concat();
        let w = weights.unwrap_or_else(|| vec![1.0; k]);
        let s = noise.unwrap_or_else(|| vec![1.0; k]);
        Ok(Self {
            inner: netsim::NetworkInstance::new(k, flat, w, s).py()?,
        })
    }

    /// Rayleigh instance `index` of the stream keyed by `seed`.
    #[staticmethod]
    fn rayleigh(users: usize, seed: u64, index: u64) -> Self {
        Self {
            inner: netsim::rayleigh_instance(users, seed, index),
        }
    }

    #[getter]
    fn users(&self) -> usize {
        self.inner.users()
    }

    fn channels(&self) -> Vec<Vec<Complex64>> {
        let k = self.inner.users();
        (0..k).map(|r| (0..k).map(|t| self.inner.channel(r, t)).collect()).collect()
    }

    fn sinr(&self, powers: Vec<f64>) -> PyResult<Vec<f64>> {
        netsim::sinr(&self.inner, &PowerAllocation::new(powers).py()?).py()
    }

    fn sum_rate(&self, powers: Vec<f64>) -> PyResult<f64> {
        netsim::weighted_sum_rate(&self.inner, &PowerAllocation::new(powers).py()?).py()
    }

    /// WMMSE powers and their weighted sum rate.
    #[pyo3(signature = (max_iters=netsim::DEFAULT_WMMSE_ITERS, tol=netsim::DEFAULT_WMMSE_TOL))]
    fn wmmse(&self, max_iters: usize, tol: f64) -> PyResult<(Vec<f64>, f64)> {
        let r = netsim::wmmse(&self.inner, max_iters, tol).py()?;
        let obj = r.objective();
        Ok((r.power.into_vec(), obj))
    }

    /// Relabels users so that user `i` becomes user `perm[i]`; returns the
    /// new instance and the correspondingly permuted powers.
    fn permuted(&self, perm: Vec<usize>, powers: Vec<f64>) -> PyResult<(NetworkInstance, Vec<f64>)> {
        let pi = netsim::Permutation::new(perm).py()?;
        let (inst, p) = netsim::apply_permutation(&self.inner, &PowerAllocation::new(powers).py()?, &pi).py()?;
        Ok((NetworkInstance { inner: inst }, p.into_vec()))
    }
}

enum Net {
    Wcgcn(nets::WcgcnNet),
    Mlp(nets::PowerMlp),
}

/// A power-control network mapping an instance to powers in (0, 1).
#[pyclass(module = "ntklab_py")]
pub struct PowerNet {
    net: Net,
}

fn prepare(inst: &NetworkInstance) -> netsim::PreparedInstance {
    netsim::PreparedInstance::new(inst.inner.clone())
}

#[pymethods]
impl PowerNet {
    /// The WCGCN message-passing network (any number of users).
    #[staticmethod]
    #[pyo3(signature = (hidden=nets::WcgcnNet::DEFAULT_HIDDEN, layers=nets::WcgcnNet::DEFAULT_LAYERS, seed=0))]
    fn wcgcn(hidden: usize, layers: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            net: Net::Wcgcn(nets::WcgcnNet::new(hidden, layers, seed).py()?),
        })
    }

    /// A fully connected network for exactly `users` users.
    #[staticmethod]
    #[pyo3(signature = (users, hidden, seed=0))]
    fn mlp(users: usize, hidden: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(Self {
            net: Net::Mlp(nets::PowerMlp::for_users(users, &hidden, seed).py()?),
        })
    }

    #[getter]
    fn num_params(&self) -> usize {
        match &self.net {
            Net::Wcgcn(n) => n.num_params(),
            Net::Mlp(n) => n.num_params(),
        }
    }

    fn powers(&self, instance: &NetworkInstance) -> PyResult<Vec<f64>> {
        let s = prepare(instance);
        match &self.net {
            Net::Wcgcn(n) => n.forward(&Input::Network(&s)).py(),
            Net::Mlp(n) => n.forward(&Input::Network(&s)).py(),
        }
    }

    /// Trains on `samples` Rayleigh instances with the negative sum rate
    /// and returns the training loss before the first epoch and after each one.
    #[pyo3(signature = (users, samples, epochs, lr=1e-3, batch_size=64, seed=0, optimizer="adam"))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        &mut self,
        users: usize,
        samples: usize,
        epochs: usize,
        lr: f64,
        batch_size: usize,
        seed: u64,
        optimizer: &str,
    ) -> PyResult<Vec<f64>> {
        let data = netsim::generate_instances(users, samples, seed).py()?;
        let opt: Optimizer = optimizer.parse().py()?;
        let mut cfg = TrainConfig::new(opt, lr, epochs, LossKind::NegSumRate);
        cfg.batch_size = Some(batch_size);
        cfg.seed = seed;
        let none = None::<&netsim::Dataset>;
        let trace = match &mut self.net {
            Net::Wcgcn(n) => nets::train(n, &data, none, &cfg),
            Net::Mlp(n) => nets::train(n, &data, none, &cfg),
        }
        .py()?;
        Ok(trace.train_losses())
    }

    /// Mean sum rate on `samples` fresh instances and its ratio to WMMSE.
    fn evaluate(&self, users: usize, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
        let test = netsim::generate_instances(users, samples, seed).py()?;
        let m = match &self.net {
            Net::Wcgcn(n) => nets::evaluate(n, &test.samples),
            Net::Mlp(n) => nets::evaluate(n, &test.samples),
        }
        .py()?;
        Ok((m.mean_sum_rate, m.ratio_to_wmmse))
    }
}

/// Closed-form kernel. `arch` is `"mlp"` (flat inputs) or `"gnn"` (rows of
/// `node_dim` features, summed over node pairs).
#[pyfunction]
#[pyo3(signature = (x, arch="mlp", node_dim=None, activation="relu"))]
fn analytic_ntk(x: Vec<Vec<f64>>, arch: &str, node_dim: Option<usize>, activation: &str) -> PyResult<Vec<Vec<f64>>> {
    let act = self::activation(activation)?;
    let k = match arch {
        "mlp" => kernels::analytic_ntk_mlp(&x, act).py()?,
        "gnn" => {
            let d = node_dim.ok_or_else(|| PyValueError::new_err("gnn kernels need node_dim"))?;
            kernels::analytic_ntk_gnn(&x, d, act).py()?
        }
        other => return Err(PyValueError::new_err(format!("unknown arch '{other}'"))),
    };
    Ok(from_kernel(&k))
}

/// Monte Carlo estimate over `draws` random networks of width `width`.
#[pyfunction]
#[pyo3(signature = (x, draws, width, seed=0, arch="mlp", node_dim=None, activation="relu"))]
fn mc_ntk(
    x: Vec<Vec<f64>>,
    draws: usize,
    width: usize,
    seed: u64,
    arch: &str,
    node_dim: Option<usize>,
    activation: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let act = self::activation(activation)?;
    let len = x.first().map_or(0, |r| r.len());
    let spec = match arch {
        "mlp" => ArchSpec::flat(len, act),
        "gnn" => {
            let d = node_dim.ok_or_else(|| PyValueError::new_err("gnn kernels need node_dim"))?;
            ArchSpec::perm_inv(len / d.max(1), d, act)
        }
        other => return Err(PyValueError::new_err(format!("unknown arch '{other}'"))),
    };
    Ok(from_kernel(&kernels::mc_ntk(&spec, &x, draws, width, seed).py()?))
}

/// Eigenvalues (descending), condition number and trace of a kernel.
#[pyfunction]
fn eig(h: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, f64, f64)> {
    let r = spectral::eig_sym(&to_kernel(h)?, None).py()?;
    Ok((r.eigenvalues.clone(), r.condition_number, r.trace))
}

/// Residuals `exp(-H t) y` at each time.
#[pyfunction]
fn kernel_dynamics(h: Vec<Vec<f64>>, y: Vec<f64>, times: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    Ok(spectral::kernel_dynamics(&to_kernel(h)?, &y, &times).py()?.residuals)
}

#[pyfunction]
fn activation_constant(p: u32, activation: &str) -> PyResult<f64> {
    spectral::activation_constant(p, self::activation(activation)?).py()
}

#[pyfunction]
#[pyo3(signature = (h, y, delta=0.05))]
fn generalization_bound(h: Vec<Vec<f64>>, y: Vec<f64>, delta: f64) -> PyResult<f64> {
    let m = y.len();
    spectral::generalization_bound(&to_kernel(h)?, &y, m, delta).py()
}

/// `(n, cond_mlp, cond_gnn)` rows on i.i.d. Gaussian node features.
#[pyfunction]
#[pyo3(signature = (n, samples=300, node_dim=4, activation="relu", seed=1))]
fn condition_landscape(
    n: Vec<usize>,
    samples: usize,
    node_dim: usize,
    activation: &str,
    seed: u64,
) -> PyResult<Vec<(usize, f64, f64)>> {
    let rows = spectral::condition_landscape(&n, samples, node_dim, self::activation(activation)?, seed).py()?;
    Ok(rows.into_iter().map(|r| (r.n, r.cond_mlp, r.cond_gnn)).collect())
}

/// `m` samples of `n` Gaussian nodes with `d` features, each a flat list.
#[pyfunction]
fn gaussian_nodes(m: usize, n: usize, d: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    Ok(netsim::generate_gaussian_nodes(m, n, d, seed).py()?.flattened())
}

#[pymodule]
pub mod ntklab_py {
    #[pymodule_export]
    use super::{
        activation_constant, analytic_ntk, condition_landscape, eig, gaussian_nodes, generalization_bound,
        kernel_dynamics, mc_ntk, NetworkInstance, PowerNet,
    };
}
