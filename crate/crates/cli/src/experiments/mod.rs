//! The figure and theorem experiments.
//!
//! Each runner writes its artifacts into an [`OutDir`] and returns a typed
//! report of the quantities the checks are phrased in.

mod bounds;
mod fig1;
mod fig2;
mod fig3;
mod ntk_regime;

pub use bounds::{run_bounds, BoundsParts, BoundsReport, ResidualRow, Thm3Row, Thm45Row};
pub use fig1::{run_fig1, Fig1Cell, Fig1Report};
pub use fig2::{run_fig2, Fig2Report};
pub use fig3::{run_fig3, Fig3Cell, Fig3Report, LambdaRow};
pub use ntk_regime::{run_ntk_regime, NtkRegimeReport, NtkRegimeRow};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ntklab::netsim::{io::fmt_f64, Dataset};
use ntklab::nets::{train, Model, TrainConfig, TrainTrace};

use crate::config::Config;
use crate::output::OutDir;
use crate::{CliError, CliResult};

/// Tags for [`ntklab::rng::derive_seed`]; each experiment cell draws its
/// own seeds from the run seed.
pub(crate) mod tag {
    pub const TRAIN_DATA: u64 = 0x100;
    pub const TEST_DATA: u64 = 0x200;
    pub const NET: u64 = 0x300;
    pub const SHUFFLE: u64 = 0x400;
    pub const KERNEL_DATA: u64 = 0x500;
    pub const LABELS: u64 = 0x600;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    Fig1,
    Fig2,
    Fig3,
    NtkRegime,
    Thm3,
    Thm45,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::Fig1,
        ExperimentId::Fig2,
        ExperimentId::Fig3,
        ExperimentId::NtkRegime,
        ExperimentId::Thm3,
        ExperimentId::Thm45,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Fig1 => "fig1",
            ExperimentId::Fig2 => "fig2",
            ExperimentId::Fig3 => "fig3",
            ExperimentId::NtkRegime => "ntk-regime",
            ExperimentId::Thm3 => "thm3",
            ExperimentId::Thm45 => "thm4-thm5",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|i| i.name()).collect();
                CliError::Usage(format!("unknown experiment '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Runs one experiment, discarding its typed report.
pub fn run(id: ExperimentId, cfg: &Config, out: &OutDir) -> CliResult<()> {
    match id {
        ExperimentId::Fig1 => run_fig1(cfg, out).map(drop),
        ExperimentId::Fig2 => run_fig2(cfg, out).map(drop),
        ExperimentId::Fig3 => run_fig3(cfg, out).map(drop),
        ExperimentId::NtkRegime => run_ntk_regime(cfg, out).map(drop),
        ExperimentId::Thm3 => run_bounds(cfg, out, BoundsParts::Thm3).map(drop),
        ExperimentId::Thm45 => run_bounds(cfg, out, BoundsParts::Thm45).map(drop),
    }
}

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Trains and writes the trace to `rel`. A diverged run still leaves its
/// partial trace on disk before the error propagates.
pub fn train_cell<M: Model>(
    net: &mut M,
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &TrainConfig,
    out: &OutDir,
    rel: &str,
) -> CliResult<TrainTrace> {
    match train(net, train_ds, Some(test_ds), cfg) {
        Ok(trace) => {
            write_trace(&trace, out, rel)?;
            Ok(trace)
        }
        Err(ntklab::Error::Divergence { epoch, loss, trace }) => {
            write_trace(&trace, out, rel)?;
            Err(CliError::Core(ntklab::Error::Divergence { epoch, loss, trace }))
        }
        Err(e) => Err(e.into()),
    }
}

fn write_trace(trace: &TrainTrace, out: &OutDir, rel: &str) -> CliResult<()> {
    out.write_with(rel, |buf| Ok(trace.write_csv(buf)?))
}

pub(crate) fn write_lines(out: &OutDir, rel: &str, header: &str, rows: &[String]) -> CliResult<()> {
    out.write_with(rel, |buf| {
        writeln!(buf, "{header}")?;
        for r in rows {
            writeln!(buf, "{r}")?;
        }
        Ok(())
    })
}
