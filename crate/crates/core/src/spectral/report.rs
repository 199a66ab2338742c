//! Condition-number landscapes and CSV export of spectral results.

use std::io::Write;

use rayon::prelude::*;

use super::{eig_sym, SpectralReport, Thm3Point};
use crate::kernels::{analytic_ntk_gnn, analytic_ntk_mlp, Activation};
use crate::netsim::{generate_gaussian_nodes, io::fmt_f64};
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapeRow {
    pub n: usize,
    pub cond_mlp: f64,
    pub cond_gnn: f64,
}

/// Condition numbers of the flat and pooled kernels on `samples` draws of
/// `n` i.i.d. standard Gaussian nodes of dimension `node_dim`, per `n`.
///
/// The samples for a given `n` depend only on `(seed, n)`.
pub fn condition_landscape(
    n_list: &[usize],
    samples: usize,
    node_dim: usize,
    activation: Activation,
    seed: u64,
) -> Result<Vec<LandscapeRow>> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::invalid("node counts must be nonempty and positive"));
    }
    n_list
        .par_iter()
        .map(|&n| {
            let ds = generate_gaussian_nodes(samples, n, node_dim, derive_seed(seed, n as u64))?;
            let x = ds.flattened();
            let mlp = eig_sym(&analytic_ntk_mlp(&x, activation)?, None)?;
            let gnn = eig_sym(&analytic_ntk_gnn(&x, node_dim, activation)?, None)?;
            Ok(LandscapeRow {
                n,
                cond_mlp: mlp.condition_number,
                cond_gnn: gnn.condition_number,
            })
        })
        .collect()
}

/// The `count` largest eigenvalues of the single-node kernel operator,
/// estimated from the Gram matrix of `nodes` scaled by `1 / nodes.len()`.
pub fn base_spectrum(nodes: &[Vec<f64>], activation: Activation, count: usize) -> Result<Vec<f64>> {
    let h = analytic_ntk_mlp(nodes, activation)?;
    let r = eig_sym(&h, None)?;
    if count > r.dim() {
        return Err(Error::invalid(format!(
            "asked for {count} eigenvalues of a {}-dimensional kernel",
            r.dim()
        )));
    }
    let scale = 1.0 / nodes.len() as f64;
    Ok(r.eigenvalues[..count].iter().map(|l| (l * scale).max(0.0)).collect())
}

pub fn write_eigenvalues<W: Write>(r: &SpectralReport, mut out: W) -> Result<()> {
    writeln!(out, "index,value")?;
    for (i, l) in r.eigenvalues.iter().enumerate() {
        writeln!(out, "{i},{}", fmt_f64(*l))?;
    }
    Ok(())
}

pub fn write_alignment<W: Write>(r: &SpectralReport, mut out: W) -> Result<()> {
    let a = r
        .alignment
        .as_ref()
        .ok_or_else(|| Error::invalid("report has no label alignment"))?;
    writeln!(out, "index,lambda,alignment")?;
    for (i, (l, v)) in r.eigenvalues.iter().zip(a).enumerate() {
        writeln!(out, "{i},{},{}", fmt_f64(*l), fmt_f64(*v))?;
    }
    Ok(())
}

pub fn write_landscape<W: Write>(rows: &[LandscapeRow], mut out: W) -> Result<()> {
    writeln!(out, "n,cond_mlp,cond_gnn")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.n, fmt_f64(r.cond_mlp), fmt_f64(r.cond_gnn))?;
    }
    Ok(())
}

/// `t,thm2,thm3_gnn,thm3_mlp`; `thm2` is blank where undefined (t = 0).
pub fn write_bounds<W: Write>(thm2: &[Option<f64>], thm3: &[Thm3Point], mut out: W) -> Result<()> {
    if thm2.len() != thm3.len() {
        return Err(Error::invalid("bound series have different lengths"));
    }
    writeln!(out, "t,thm2,thm3_gnn,thm3_mlp")?;
    for (b2, p) in thm2.iter().zip(thm3) {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(p.t),
            b2.map(fmt_f64).unwrap_or_default(),
            fmt_f64(p.gnn),
            fmt_f64(p.mlp)
        )?;
    }
    Ok(())
}
