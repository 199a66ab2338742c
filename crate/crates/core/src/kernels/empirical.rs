use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{KernelMatrix, Provenance};
use crate::nets::{Input, Model};
use crate::{Error, Result};

/// Transposed Jacobian of the scalar readout: column `j` is
/// `d(sum of outputs)/d(theta)` at sample `j`.
pub fn jacobian<M: Model>(net: &M, inputs: &[Input<'_>]) -> Result<DMatrix<f64>> {
    if inputs.is_empty() {
        return Err(Error::invalid("need at least one sample"));
    }
    let p = net.num_params();
    let cols: Vec<Vec<f64>> = inputs
        .par_iter()
        .map(|input| {
            let (out, cache) = net.forward_cached(input)?;
            let mut g = vec![0.0; p];
            net.backward(input, &cache, &vec![1.0; out.len()], &mut g);
            Ok(g)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_vec(p, inputs.len(), cols.concat()))
}

/// `H_ij = <df(x_i)/dtheta, df(x_j)/dtheta>` at the network's current parameters.
pub fn empirical_ntk<M: Model>(net: &M, inputs: &[Input<'_>]) -> Result<KernelMatrix> {
    let jt = jacobian(net, inputs)?;
    let h = jt.tr_mul(&jt);
    KernelMatrix::new(
        h,
        Provenance::Empirical {
            params: net.num_params(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{analytic_ntk_mlp, Activation, ArchSpec};
    use crate::netsim::generate_gaussian_nodes;
    use crate::nets::TwoLayerNet;

    #[test]
    fn empirical_kernel_is_psd() {
        let ds = generate_gaussian_nodes(20, 1, 5, 1).unwrap();
        let x = ds.flattened();
        let inputs: Vec<Input> = x.iter().map(|v| Input::Vector(v)).collect();
        let net = TwoLayerNet::init(ArchSpec::flat(5, Activation::Relu), 64, 3).unwrap();
        let h = empirical_ntk(&net, &inputs).unwrap();
        h.check_invariants().unwrap();
    }

    #[test]
    fn rank_is_bounded_by_parameter_count() {
        // width 2, d = 3: 6 parameters, 20 samples
        let ds = generate_gaussian_nodes(20, 1, 3, 4).unwrap();
        let x = ds.flattened();
        let inputs: Vec<Input> = x.iter().map(|v| Input::Vector(v)).collect();
        let net = TwoLayerNet::init(ArchSpec::flat(3, Activation::Relu), 2, 5).unwrap();
        let h = empirical_ntk(&net, &inputs).unwrap();
        let eig = h.entries().clone().symmetric_eigenvalues();
        let tol = 1e-10 * eig.max();
        let rank = eig.iter().filter(|&&l| l > tol).count();
        assert!(rank <= net.num_params(), "rank {rank} > {}", net.num_params());
    }

    #[test]
    fn concentrates_on_analytic_kernel_with_width() {
        let ds = generate_gaussian_nodes(30, 1, 8, 21).unwrap();
        let x = ds.flattened();
        let inputs: Vec<Input> = x.iter().map(|v| Input::Vector(v)).collect();
        let exact = analytic_ntk_mlp(&x, Activation::Relu).unwrap();
        let errs: Vec<f64> = [256, 1024, 4096]
            .iter()
            .map(|&w| {
                let net = TwoLayerNet::init(ArchSpec::flat(8, Activation::Relu), w, 77).unwrap();
                empirical_ntk(&net, &inputs)
                    .unwrap()
                    .relative_frobenius_error(&exact)
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}
