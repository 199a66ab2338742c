use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{check_samples, empirical::jacobian, ArchSpec, KernelMatrix, Provenance};
use crate::nets::{Input, TwoLayerNet};
use crate::rng::{domain, stream};
use crate::{Error, Result};

// Draws reduced sequentially inside a chunk, chunks reduced in index order:
// the summation tree does not depend on the thread count.
const DRAW_CHUNK: usize = 4;

/// Monte Carlo estimate of the expected Jacobian Gram matrix over Gaussian
/// initializations.
///
/// Each draw initializes a fresh width-`width_per_draw` network from its own
/// stream and contributes its empirical kernel; the estimate is the mean
/// over draws, so it is unbiased for the analytic kernel at any width.
pub fn mc_ntk<S: AsRef<[f64]> + Sync>(
    arch: &ArchSpec,
    x: &[S],
    draws: usize,
    width_per_draw: usize,
    seed: u64,
) -> Result<KernelMatrix> {
    if draws == 0 || width_per_draw == 0 {
        return Err(Error::invalid("draws and width_per_draw must be positive"));
    }
    arch.validate()?;
    check_samples(x, Some(arch.input_dim))?;
    let inputs: Vec<Input> = x.iter().map(|s| Input::Vector(s.as_ref())).collect();
    let m = inputs.len();

    let chunk_sums: Vec<DMatrix<f64>> = (0..draws)
        .collect::<Vec<_>>()
        .par_chunks(DRAW_CHUNK)
        .map(|chunk| {
            let mut acc = DMatrix::zeros(m, m);
            for &d in chunk {
                let mut rng = stream(seed, domain::MC_DRAW, d as u64);
                let net = TwoLayerNet::init_from_rng(*arch, width_per_draw, &mut rng)?;
                let jt = jacobian(&net, &inputs)?;
                acc += jt.tr_mul(&jt);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = DMatrix::zeros(m, m);
    for c in chunk_sums {
        total += c;
    }
    total /= draws as f64;
    // exact symmetry regardless of GEMM rounding
    let total = (&total + total.transpose()) * 0.5;
    KernelMatrix::new(
        total,
        Provenance::MonteCarlo {
            draws,
            width: width_per_draw,
        },
    )
}
