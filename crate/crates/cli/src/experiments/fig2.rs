use ntklab::netsim::io::fmt_f64;
use ntklab::spectral::{condition_landscape, report::write_landscape, LandscapeRow};

use super::write_lines;
use crate::config::{parse_activation, Config};
use crate::output::OutDir;
use crate::plots;
use crate::CliResult;

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Report {
    pub rows: Vec<LandscapeRow>,
    pub gnn_growth_limit: f64,
}

impl Fig2Report {
    pub fn mlp_strictly_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].cond_mlp > w[0].cond_mlp)
    }

    /// Condition number at the largest `n` over the one at the smallest.
    pub fn mlp_growth(&self) -> f64 {
        self.rows.last().unwrap().cond_mlp / self.rows[0].cond_mlp
    }

    pub fn gnn_growth(&self) -> f64 {
        self.rows.last().unwrap().cond_gnn / self.rows[0].cond_gnn
    }
}

pub fn run_fig2(cfg: &Config, out: &OutDir) -> CliResult<Fig2Report> {
    let c = &cfg.fig2;
    let mut n = c.n.clone();
    n.sort_unstable();
    n.dedup();
    let rows = condition_landscape(&n, c.samples, c.node_dim, parse_activation(&c.activation)?, cfg.seed)?;
    out.write_with("landscape.csv", |buf| Ok(write_landscape(&rows, buf)?))?;
    let report = Fig2Report {
        rows,
        gnn_growth_limit: c.gnn_growth_limit,
    };
    write_lines(
        out,
        "summary.csv",
        "key,value",
        &[
            format!("mlp_strictly_increasing,{}", report.mlp_strictly_increasing()),
            format!("mlp_growth,{}", fmt_f64(report.mlp_growth())),
            format!("gnn_growth,{}", fmt_f64(report.gnn_growth())),
            format!("gnn_growth_limit,{}", fmt_f64(report.gnn_growth_limit)),
            format!("gnn_within_limit,{}", report.gnn_growth() <= report.gnn_growth_limit),
        ],
    )?;
    out.write("plot_fig2.py", plots::FIG2.as_bytes())?;
    Ok(report)
}
