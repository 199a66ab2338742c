use ntklab::kernels::{analytic_ntk_gnn, analytic_ntk_mlp};
use ntklab::netsim::{generate_instances, io::fmt_f64, Dataset, NodeFeatures};
use ntklab::nets::{
    epochs_to_threshold, policy_rates, LossKind, PowerMlp, TrainConfig, TrainTrace, WcgcnNet, WmmsePolicy,
};
use ntklab::rng::derive_seed;
use ntklab::spectral::eig_sym;

use super::{tag, train_cell, write_lines};
use crate::config::{parse_activation, parse_optimizer, Config};
use crate::output::OutDir;
use crate::plots;
use crate::CliResult;

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Cell {
    pub model: &'static str,
    pub m: usize,
    /// Mean training loss of the WMMSE powers; the excess over it is what
    /// the threshold is measured on.
    pub baseline: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `None` if the threshold was never reached.
    pub epochs_to_threshold: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRow {
    pub m: usize,
    pub lambda_min_mlp: f64,
    pub lambda_min_gnn: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Report {
    pub cells: Vec<Fig3Cell>,
    pub lambda: Vec<LambdaRow>,
    pub epochs: usize,
}

impl Fig3Report {
    pub fn cell(&self, model: &str, m: usize) -> Option<&Fig3Cell> {
        self.cells.iter().find(|c| c.model == model && c.m == m)
    }

    /// Epochs to threshold, with runs that never get there counted as
    /// one epoch past the budget.
    pub fn censored_epochs(&self, model: &str, m: usize) -> Option<usize> {
        self.cell(model, m).map(|c| c.epochs_to_threshold.unwrap_or(self.epochs + 1))
    }

    /// Epochs to threshold at the largest `m` over those at the smallest.
    pub fn slowdown(&self, model: &str) -> Option<f64> {
        let ms: Vec<usize> = self.cells.iter().filter(|c| c.model == model).map(|c| c.m).collect();
        let (lo, hi) = (*ms.iter().min()?, *ms.iter().max()?);
        let a = self.censored_epochs(model, lo)?.max(1);
        let b = self.censored_epochs(model, hi)?;
        Some(b as f64 / a as f64)
    }

    pub fn lambda_mlp_non_increasing(&self) -> bool {
        self.lambda.windows(2).all(|w| w[1].lambda_min_mlp <= w[0].lambda_min_mlp)
    }
}

fn node_rows(ds: &Dataset) -> Vec<Vec<f64>> {
    (0..ds.len()).map(|j| ds.node_rows(j)).collect()
}

pub fn run_fig3(cfg: &Config, out: &OutDir) -> CliResult<Fig3Report> {
    let c = &cfg.fig3;
    let k = c.users;
    let mut sizes = c.train_samples.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let max_m = *sizes.last().expect("validated nonempty");

    // Smaller training sets are prefixes of the largest one.
    let pool = generate_instances(k, max_m, derive_seed(cfg.seed, tag::TRAIN_DATA))?;
    let test_ds = generate_instances(k, c.test_samples, derive_seed(cfg.seed, tag::TEST_DATA))?;
    let pool_rates = policy_rates(&WmmsePolicy::default(), &pool.samples)?;
    let net_seed = derive_seed(cfg.seed, tag::NET);

    let mut tcfg = TrainConfig::new(parse_optimizer(&c.optimizer)?, c.lr, c.epochs, LossKind::NegSumRate);
    tcfg.batch_size = Some(c.batch_size);
    tcfg.steps_per_epoch = Some(c.steps_per_epoch);
    tcfg.seed = derive_seed(cfg.seed, tag::SHUFFLE);

    let mut cells = Vec::new();
    for &m in &sizes {
        let train_ds = pool.prefix(m);
        let baseline = -pool_rates[..m].iter().sum::<f64>() / m as f64;
        let mut mlp = PowerMlp::for_users(k, &c.mlp_hidden, net_seed)?;
        let t = train_cell(&mut mlp, &train_ds, &test_ds, &tcfg, out, &format!("m{m}/mlp/trace.csv"))?;
        cells.push(cell("mlp", m, baseline, &t, c.threshold));
        let mut gnn = WcgcnNet::new(c.hidden, c.layers, net_seed)?;
        let t = train_cell(&mut gnn, &train_ds, &test_ds, &tcfg, out, &format!("m{m}/gnn/trace.csv"))?;
        cells.push(cell("gnn", m, baseline, &t, c.threshold));
    }

    let lambda = lambda_rows(cfg)?;
    let report = Fig3Report {
        cells,
        lambda,
        epochs: c.epochs,
    };
    let rows: Vec<String> = report
        .cells
        .iter()
        .map(|c| {
            format!(
                "{},{},{},{},{},{}",
                c.model,
                c.m,
                fmt_f64(c.baseline),
                fmt_f64(c.initial_loss),
                fmt_f64(c.final_loss),
                c.epochs_to_threshold.map(|e| e.to_string()).unwrap_or_default()
            )
        })
        .collect();
    write_lines(
        out,
        "epochs_to_threshold.csv",
        "model,m,wmmse_loss,initial_loss,final_loss,epochs_to_threshold",
        &rows,
    )?;
    let rows: Vec<String> = report
        .lambda
        .iter()
        .map(|r| format!("{},{},{}", r.m, fmt_f64(r.lambda_min_mlp), fmt_f64(r.lambda_min_gnn)))
        .collect();
    write_lines(out, "lambda_min.csv", "m,lambda_min_mlp,lambda_min_gnn", &rows)?;
    let mut summary = vec![
        format!("threshold,{}", fmt_f64(c.threshold)),
        format!("lambda_mlp_non_increasing,{}", report.lambda_mlp_non_increasing()),
    ];
    for model in ["mlp", "gnn"] {
        if let Some(s) = report.slowdown(model) {
            summary.push(format!("{model}_slowdown,{}", fmt_f64(s)));
        }
    }
    write_lines(out, "summary.csv", "key,value", &summary)?;
    out.write("plot_fig3.py", plots::FIG3.as_bytes())?;
    Ok(report)
}

fn cell(model: &'static str, m: usize, baseline: f64, trace: &TrainTrace, threshold: f64) -> Fig3Cell {
    Fig3Cell {
        model,
        m,
        baseline,
        initial_loss: trace.rows[0].train_loss,
        final_loss: trace.last().expect("initial row").train_loss,
        epochs_to_threshold: epochs_to_threshold(trace, threshold, baseline),
    }
}

/// Smallest eigenvalues of the analytic kernels on nested prefixes of one
/// channel sample: the flat network sees the flat features, the pooled
/// network the per-user node features.
fn lambda_rows(cfg: &Config) -> CliResult<Vec<LambdaRow>> {
    let c = &cfg.fig3;
    let act = parse_activation(&c.activation)?;
    let mut sizes = c.lambda_samples.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let max_m = *sizes.last().expect("validated nonempty");
    let pool = generate_instances(c.users, max_m, derive_seed(cfg.seed, tag::KERNEL_DATA))?;
    let flat: Vec<Vec<f64>> = pool.samples.iter().map(|s| s.flat.0.clone()).collect();
    let nodes = node_rows(&pool);
    sizes
        .iter()
        .map(|&m| {
            let mlp = eig_sym(&analytic_ntk_mlp(&flat[..m], act)?, None)?;
            let gnn = eig_sym(&analytic_ntk_gnn(&nodes[..m], pool.node_dim(), act)?, None)?;
            Ok(LambdaRow {
                m,
                lambda_min_mlp: mlp.lambda_min(),
                lambda_min_gnn: gnn.lambda_min(),
            })
        })
        .collect()
}
