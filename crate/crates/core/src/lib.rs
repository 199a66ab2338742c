//! Neural tangent kernel laboratory for permutation-invariant learning on
//! interference channels.
//!
//! The crate is split into four layers:
//!
//! * [`netsim`] builds K-user interference-channel instances, evaluates the
//!   weighted sum-rate objective, runs the WMMSE baseline and provides the
//!   permutation machinery and featurizations used by both architectures.
//! * [`kernels`] computes neural tangent kernels of two-layer networks in
//!   closed form, by Monte Carlo over random initializations, and
//!   empirically from parameter Jacobians.
//! * [`spectral`] holds eigen-analysis, kernel-regression dynamics and the
//!   convergence / generalization bound calculators.
//! * [`nets`] implements finite-width networks (an NTK-regime two-layer net,
//!   a flat power-control MLP and the WCGCN message-passing GNN) with exact
//!   reverse-mode gradients and a deterministic trainer.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod kernels;
pub mod netsim;
pub mod nets;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
