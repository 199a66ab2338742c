use ntklab::kernels::{analytic_ntk_gnn, analytic_ntk_mlp, KernelMatrix};
use ntklab::netsim::{generate_gaussian_nodes, io::fmt_f64, synthetic_labels};
use ntklab::rng::derive_seed;
use ntklab::spectral::{base_spectrum, generalization_bound, thm2_rate_bound, thm3_bounds, KernelFlow};

use super::ntk_regime::unit_beta;
use super::{opt, tag, write_lines};
use crate::config::{parse_activation, Config};
use crate::output::OutDir;
use crate::plots;
use crate::{CliError, CliResult};

/// Which artifacts a bounds run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundsParts {
    /// Convergence bound curves and kernel-regression residual curves.
    Thm3,
    /// Generalization bounds.
    Thm45,
    All,
}

impl BoundsParts {
    fn thm3(self) -> bool {
        matches!(self, BoundsParts::Thm3 | BoundsParts::All)
    }

    fn thm45(self) -> bool {
        matches!(self, BoundsParts::Thm45 | BoundsParts::All)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thm3Row {
    pub p: u32,
    pub n: usize,
    pub t: f64,
    pub thm2_gnn: Option<f64>,
    pub thm2_mlp: Option<f64>,
    pub gnn: f64,
    pub mlp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thm45Row {
    pub p: u32,
    pub n: usize,
    pub gnn_bound: Option<f64>,
    pub mlp_bound: Option<f64>,
    /// Empty unless a bound could not be computed.
    pub note: String,
}

impl Thm45Row {
    pub fn ratio(&self) -> Option<f64> {
        Some(self.mlp_bound? / self.gnn_bound?)
    }
}

/// Time for the kernel-regression residual to fall to the configured
/// fraction of `||y||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRow {
    pub p: u32,
    pub n: usize,
    pub t_gnn: Option<f64>,
    pub t_mlp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundsReport {
    pub thm3: Vec<Thm3Row>,
    pub thm45: Vec<Thm45Row>,
    pub residual: Vec<ResidualRow>,
}

impl BoundsReport {
    pub fn thm3_ordered(&self) -> bool {
        self.thm3.iter().all(|r| r.gnn <= r.mlp)
    }

    /// Whether `mlp_bound / gnn_bound` strictly increases with `n` for degree `p`.
    pub fn ratio_increasing(&self, p: u32) -> bool {
        let ratios: Vec<Option<f64>> = self.thm45.iter().filter(|r| r.p == p).map(|r| r.ratio()).collect();
        !ratios.is_empty()
            && ratios.iter().all(Option::is_some)
            && ratios.windows(2).all(|w| w[1] > w[0])
    }

    pub fn residual_row(&self, p: u32, n: usize) -> Option<&ResidualRow> {
        self.residual.iter().find(|r| r.p == p && r.n == n)
    }
}

struct Problem {
    nodes: Vec<Vec<f64>>,
    y: Vec<f64>,
    h_mlp: KernelMatrix,
    h_gnn: KernelMatrix,
}

fn problem(cfg: &Config, n: usize, p: u32) -> CliResult<Problem> {
    let c = &cfg.bounds;
    let act = parse_activation(&c.activation)?;
    let mut ds = generate_gaussian_nodes(c.samples, n, c.node_dim, derive_seed(cfg.seed, tag::KERNEL_DATA + n as u64))?;
    if c.unit_nodes {
        ds = ds.unit_nodes();
    }
    let beta = unit_beta(derive_seed(cfg.seed, tag::LABELS), c.node_dim);
    let y = synthetic_labels(&ds, &beta, p)?;
    let x = ds.flattened();
    Ok(Problem {
        h_mlp: analytic_ntk_mlp(&x, act)?,
        h_gnn: analytic_ntk_gnn(&x, c.node_dim, act)?,
        nodes: x,
        y,
    })
}

fn defined(r: ntklab::Result<f64>) -> CliResult<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_numeric() => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn run_bounds(cfg: &Config, out: &OutDir, parts: BoundsParts) -> CliResult<BoundsReport> {
    let c = &cfg.bounds;
    let act = parse_activation(&c.activation)?;
    let consts = cfg.constant_table()?;
    let mut ns = c.n.clone();
    ns.sort_unstable();
    ns.dedup();
    if ns[0] == 0 || *ns.last().unwrap() > c.samples {
        return Err(CliError::Usage("bounds.n must lie in 1..=bounds.samples".into()));
    }
    let mut report = BoundsReport::default();
    for &p in &c.p {
        let constant = consts.get(p, act)?;
        for &n in &ns {
            let prob = problem(cfg, n, p)?;
            if parts.thm3() {
                thm3_cell(cfg, &prob, p, n, constant, out, &mut report)?;
            }
            if parts.thm45() {
                report.thm45.push(thm45_cell(cfg, &prob, p, n)?);
            }
        }
    }

    if parts.thm3() {
        let rows: Vec<String> = report
            .thm3
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{},{}",
                    r.p,
                    r.n,
                    fmt_f64(r.t),
                    opt(r.thm2_gnn),
                    opt(r.thm2_mlp),
                    fmt_f64(r.gnn),
                    fmt_f64(r.mlp)
                )
            })
            .collect();
        write_lines(out, "thm3.csv", "p,n,t,thm2_gnn,thm2_mlp,thm3_gnn,thm3_mlp", &rows)?;
        let rows: Vec<String> = report
            .residual
            .iter()
            .map(|r| format!("{},{},{},{}", r.p, r.n, opt(r.t_gnn), opt(r.t_mlp)))
            .collect();
        write_lines(out, "residual_times.csv", "p,n,t_gnn,t_mlp", &rows)?;
        out.write("plot_thm3.py", plots::THM3.as_bytes())?;
    }
    if parts.thm45() {
        let rows: Vec<String> = report
            .thm45
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    r.p,
                    r.n,
                    opt(r.gnn_bound),
                    opt(r.mlp_bound),
                    opt(r.ratio()),
                    r.note
                )
            })
            .collect();
        write_lines(out, "thm45.csv", "p,n,gnn_bound,mlp_bound,ratio,note", &rows)?;
        out.write("plot_thm45.py", plots::THM45.as_bytes())?;
    }
    Ok(report)
}

fn thm3_cell(
    cfg: &Config,
    prob: &Problem,
    p: u32,
    n: usize,
    constant: f64,
    out: &OutDir,
    report: &mut BoundsReport,
) -> CliResult<()> {
    let c = &cfg.bounds;
    let act = parse_activation(&c.activation)?;
    // Eigenvalues of the single-node kernel, estimated on the first node
    // of every sample.
    let first: Vec<Vec<f64>> = prob.nodes.iter().map(|g| g[..c.node_dim].to_vec()).collect();
    let lambdas = base_spectrum(&first, act, n)?;
    let lmin = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let unit = if lmin > 0.0 { 1.0 / (constant * lmin) } else { 1.0 };
    let last = (c.time_points.max(2) - 1) as f64;
    let times: Vec<f64> = (0..c.time_points.max(2)).map(|i| c.time_horizon * unit * i as f64 / last).collect();
    // The rate bound is proportional to 1 / t; evaluate it once at t = 1.
    let zero = vec![0.0; prob.y.len()];
    let g1 = defined(thm2_rate_bound(&prob.h_gnn, &zero, &prob.y, 1.0))?;
    let m1 = defined(thm2_rate_bound(&prob.h_mlp, &zero, &prob.y, 1.0))?;
    for pt in thm3_bounds(&lambdas, 1.0, p, constant, &times)? {
        let at = |b: Option<f64>| b.filter(|_| pt.t > 0.0).map(|b| b / pt.t);
        let (g2, m2) = (at(g1), at(m1));
        report.thm3.push(Thm3Row {
            p,
            n,
            t: pt.t,
            thm2_gnn: g2,
            thm2_mlp: m2,
            gnn: pt.gnn,
            mlp: pt.mlp,
        });
    }

    let gnn = KernelFlow::new(&prob.h_gnn, &prob.y)?;
    let mlp = KernelFlow::new(&prob.h_mlp, &prob.y)?;
    let t_gnn = gnn.time_to_fraction(c.residual_fraction)?;
    let t_mlp = mlp.time_to_fraction(c.residual_fraction)?;
    report.residual.push(ResidualRow { p, n, t_gnn, t_mlp });

    // Residual curves on a log grid reaching past both crossing times.
    let y_norm = prob.y.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let lo = 1e-3 / gnn.report().lambda_max().max(mlp.report().lambda_max());
    let hi = 2.0 * t_gnn.into_iter().chain(t_mlp).fold(lo * 1e3, f64::max);
    let steps = 200;
    let grid = std::iter::once(0.0).chain((0..=steps).map(|i| lo * (hi / lo).powf(i as f64 / steps as f64)));
    let mut rows = Vec::with_capacity(steps + 2);
    for t in grid {
        rows.push(format!(
            "{},{},{}",
            fmt_f64(t),
            fmt_f64(gnn.residual_norm(t)? / y_norm),
            fmt_f64(mlp.residual_norm(t)? / y_norm)
        ));
    }
    write_lines(out, &format!("residuals/p{p}_n{n}.csv"), "t,gnn,mlp", &rows)
}

fn thm45_cell(cfg: &Config, prob: &Problem, p: u32, n: usize) -> CliResult<Thm45Row> {
    let c = &cfg.bounds;
    let mut notes = Vec::new();
    let mut bound = |h: &KernelMatrix, which: &str| -> CliResult<Option<f64>> {
        match generalization_bound(h, &prob.y, c.samples, c.delta) {
            Ok(v) => Ok(Some(v)),
            Err(e) if e.is_numeric() => {
                notes.push(format!("{which}: {e}"));
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    };
    let gnn_bound = bound(&prob.h_gnn, "gnn")?;
    let mlp_bound = bound(&prob.h_mlp, "mlp")?;
    Ok(Thm45Row {
        p,
        n,
        gnn_bound,
        mlp_bound,
        note: notes.join("; ").replace(',', ";"),
    })
}
