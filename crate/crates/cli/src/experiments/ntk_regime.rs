use ntklab::kernels::{analytic_ntk_mlp, empirical_ntk, Activation, ArchSpec};
use ntklab::netsim::{generate_gaussian_nodes, io::fmt_f64, synthetic_labels};
use ntklab::nets::{train, LossKind, Model, Optimizer, TrainConfig, TwoLayerNet, VectorDataset};
use ntklab::rng::{derive_seed, domain, stream};
use ntklab::spectral::KernelFlow;
use rand_distr::{Distribution, StandardNormal};

use super::{tag, write_lines};
use crate::config::{parse_activation, Config};
use crate::output::OutDir;
use crate::plots;
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NtkRegimeRow {
    pub width: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Relative Frobenius distance of the kernel at init from the analytic one.
    pub kernel_error: f64,
    /// Largest `|L_net - L_pred| / L_pred` while `L_pred` is within the
    /// configured reduction of the initial loss.
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NtkRegimeReport {
    pub rows: Vec<NtkRegimeRow>,
}

impl NtkRegimeReport {
    pub fn deviation_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].max_deviation < w[0].max_deviation)
    }

    pub fn row(&self, width: usize) -> Option<&NtkRegimeRow> {
        self.rows.iter().find(|r| r.width == width)
    }
}

/// Unit-norm direction drawn from the label stream.
pub(crate) fn unit_beta(seed: u64, d: usize) -> Vec<f64> {
    let mut rng = stream(seed, domain::LABELS, 0);
    let b: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    b.into_iter().map(|v| v / n).collect()
}

pub fn run_ntk_regime(cfg: &Config, out: &OutDir) -> CliResult<NtkRegimeReport> {
    let c = &cfg.ntk_regime;
    let act = parse_activation(&c.activation)?;
    if c.loss_reduction.is_nan() || c.loss_reduction <= 1.0 {
        return Err(CliError::Usage("ntk_regime.loss_reduction must exceed 1".into()));
    }
    let m = c.samples;
    let nodes = generate_gaussian_nodes(m, 1, c.input_dim, derive_seed(cfg.seed, tag::KERNEL_DATA))?;
    let beta = unit_beta(derive_seed(cfg.seed, tag::LABELS), c.input_dim);
    let y = synthetic_labels(&nodes, &beta, 1)?;
    let data = VectorDataset::new(nodes.flattened(), y)?;
    let analytic = analytic_ntk_mlp(&data.x, act)?;

    let mut rows = Vec::new();
    for &width in &c.widths {
        let net_seed = derive_seed(cfg.seed, tag::NET + width as u64);
        let (row, traj) = run_width(&data, act, width, net_seed, c.step, c.loss_reduction, c.max_epochs, &analytic)?;
        let lines: Vec<String> = traj
            .iter()
            .map(|(e, t, net, pred)| format!("{e},{},{},{}", fmt_f64(*t), fmt_f64(*net), fmt_f64(*pred)))
            .collect();
        write_lines(out, &format!("trajectory_w{width}.csv"), "epoch,t,loss_net,loss_pred", &lines)?;
        rows.push(row);
    }
    let report = NtkRegimeReport { rows };
    let lines: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{},{},{},{}", r.width, fmt_f64(r.lr), r.epochs, fmt_f64(r.max_deviation)))
        .collect();
    write_lines(out, "ntk_regime.csv", "width,lr,epochs,max_deviation", &lines)?;
    let lines: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{},{}", r.width, fmt_f64(r.kernel_error)))
        .collect();
    write_lines(out, "kernel_convergence.csv", "width,kernel_error", &lines)?;
    out.write("plot_ntk_regime.py", plots::NTK_REGIME.as_bytes())?;
    Ok(report)
}

type Trajectory = Vec<(usize, f64, f64, f64)>;

/// Full-batch gradient descent on the half mean squared error against the
/// linearized prediction `r(t) = exp(-H t) r(0)` with `t = lr * epoch / m`,
/// where `H` is the empirical kernel at initialization.
#[allow(clippy::too_many_arguments)]
fn run_width(
    data: &VectorDataset,
    act: Activation,
    width: usize,
    seed: u64,
    step: f64,
    loss_reduction: f64,
    max_epochs: usize,
    analytic: &ntklab::kernels::KernelMatrix,
) -> CliResult<(NtkRegimeRow, Trajectory)> {
    let m = data.x.len();
    let arch = ArchSpec::flat(data.x[0].len(), act);
    let mut net = TwoLayerNet::init(arch, width, seed)?;
    let inputs = data.inputs();
    let h = empirical_ntk(&net, &inputs)?;
    let kernel_error = h.relative_frobenius_error(analytic);

    let u0: Vec<f64> = inputs.iter().map(|x| Ok(net.forward(x)?[0])).collect::<ntklab::Result<_>>()?;
    let r0: Vec<f64> = data.y.iter().zip(&u0).map(|(y, u)| y - u).collect();
    let flow = KernelFlow::new(&h, &r0)?;
    let lr = step * m as f64 / flow.report().lambda_max();
    let dt = lr / m as f64;
    let fraction = loss_reduction.sqrt().recip();
    let t_end = flow
        .time_to_fraction(fraction)?
        .ok_or_else(|| CliError::Core(ntklab::Error::SingularKernel {
            lambda_min: flow.report().lambda_min(),
        }))?;
    let epochs = ((t_end / dt).ceil() as usize).clamp(1, max_epochs);

    let cfg = TrainConfig::new(Optimizer::Gd, lr, epochs, LossKind::Squared);
    let trace = train(&mut net, data, None::<&VectorDataset>, &cfg)?;

    let scale = 0.5 / m as f64;
    let l0 = scale * flow.residual_norm(0.0)?.powi(2);
    let mut max_dev: f64 = 0.0;
    let mut traj = Vec::with_capacity(trace.rows.len());
    for row in &trace.rows {
        let t = row.epoch as f64 * dt;
        let pred = scale * flow.residual_norm(t)?.powi(2);
        if pred >= l0 / loss_reduction {
            max_dev = max_dev.max((row.train_loss - pred).abs() / pred);
        }
        traj.push((row.epoch, t, row.train_loss, pred));
    }
    Ok((
        NtkRegimeRow {
            width,
            lr,
            epochs,
            kernel_error,
            max_deviation: max_dev,
        },
        traj,
    ))
}
