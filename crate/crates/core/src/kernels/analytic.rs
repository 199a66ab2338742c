use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{check_samples, Activation, KernelMatrix, Provenance};
use crate::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Angle between `x` and `z`, accurate even when they are nearly parallel,
/// where `acos` of the cosine loses half the digits.
fn angle(x: &[f64], z: &[f64], nx: f64, nz: f64) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in x.iter().zip(z) {
        let (u, v) = (a / nx, b / nz);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

#[inline]
fn pair_kernel(x: &[f64], z: &[f64], nx: f64, nz: f64, activation: Activation) -> f64 {
    let d = dot(x, z);
    match activation {
        Activation::Relu => d * (PI - angle(x, z, nx, nz)) / (2.0 * PI),
        Activation::Quadratic => 4.0 * d * d,
    }
}

/// Infinite-width tangent kernel between two inputs.
pub fn base_kernel(x: &[f64], z: &[f64], activation: Activation) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::invalid("kernel arguments differ in dimension"));
    }
    let (nx, nz) = (dot(x, x).sqrt(), dot(z, z).sqrt());
    if nx == 0.0 || nz == 0.0 {
        return Err(Error::DegenerateInput("zero input vector".into()));
    }
    Ok(pair_kernel(x, z, nx, nz, activation))
}

fn norms_nonzero<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
    rows.enumerate()
        .map(|(j, r)| {
            let n = dot(r, r).sqrt();
            if n == 0.0 {
                Err(Error::DegenerateInput(format!("input {j} is the zero vector")))
            } else {
                Ok(n)
            }
        })
        .collect()
}

fn symmetric_from_upper(m: usize, entry: impl Fn(usize, usize) -> f64 + Sync) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (i..m).map(|j| entry(i, j)).collect())
        .collect();
    let mut h = DMatrix::zeros(m, m);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            h[(i, i + off)] = v;
            h[(i + off, i)] = v;
        }
    }
    h
}

/// Closed-form kernel of the two-layer network on flat inputs.
pub fn analytic_ntk_mlp<S: AsRef<[f64]> + Sync>(
    x: &[S],
    activation: Activation,
) -> Result<KernelMatrix> {
    check_samples(x, None)?;
    let norms = norms_nonzero(x.iter().map(|s| s.as_ref()))?;
    let h = symmetric_from_upper(x.len(), |i, j| {
        let (a, b) = (x[i].as_ref(), x[j].as_ref());
        pair_kernel(a, b, norms[i], norms[j], activation)
    });
    KernelMatrix::new(h, Provenance::AnalyticMlp)
}

/// Kernel of the sum-readout network: `H(G, G') = sum_{i in G, j in G'} h(x_i, x'_j)`.
///
/// Each graph is a row-major `nodes x node_dim` block; node counts may differ.
pub fn analytic_ntk_gnn<S: AsRef<[f64]> + Sync>(
    graphs: &[S],
    node_dim: usize,
    activation: Activation,
) -> Result<KernelMatrix> {
    if node_dim == 0 {
        return Err(Error::invalid("node dimension must be positive"));
    }
    if graphs.is_empty() {
        return Err(Error::invalid("need at least one graph"));
    }
    for (j, g) in graphs.iter().enumerate() {
        let g = g.as_ref();
        if g.is_empty() || g.len() % node_dim != 0 {
            return Err(Error::invalid(format!(
                "graph {j} has {} values, not a positive multiple of {node_dim}",
                g.len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("graph {j} has non-finite entries")));
        }
    }
    let norms: Vec<Vec<f64>> = graphs
        .iter()
        .map(|g| norms_nonzero(g.as_ref().chunks_exact(node_dim)))
        .collect::<Result<_>>()?;
    let h = symmetric_from_upper(graphs.len(), |a, b| {
        let mut acc = 0.0;
        for (xi, ni) in graphs[a].as_ref().chunks_exact(node_dim).zip(&norms[a]) {
            for (zj, nj) in graphs[b].as_ref().chunks_exact(node_dim).zip(&norms[b]) {
                acc += pair_kernel(xi, zj, *ni, *nj, activation);
            }
        }
        acc
    });
    KernelMatrix::new(h, Provenance::AnalyticGnn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{generate_gaussian_nodes, Permutation};
    use crate::rng::{domain, stream};
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn orthogonal_and_opposite_inputs() {
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        let neg = [-1.0, 0.0, 0.0];
        assert_eq!(base_kernel(&e1, &e2, Activation::Relu).unwrap(), 0.0);
        assert!(base_kernel(&e1, &neg, Activation::Relu).unwrap().abs() < 1e-15);
        assert!((base_kernel(&e1, &e1, Activation::Relu).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn diagonal_matches_monte_carlo_oracle() {
        // E[1{w.x > 0}^2] (x . x) for unit x, estimated directly over Gaussian w.
        let x = [0.6, 0.0, 0.8];
        let mut rng = stream(3, domain::MISC, 0);
        let n = 200_000;
        let mut hits = 0usize;
        for _ in 0..n {
            let w: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            if dot(&w, &x) > 0.0 {
                hits += 1;
            }
        }
        let est = hits as f64 / n as f64;
        let band = 4.0 * 0.5 / (n as f64).sqrt();
        let exact = base_kernel(&x, &x, Activation::Relu).unwrap();
        assert!((est - exact).abs() < band, "MC {est} vs closed form {exact}");
    }

    #[test]
    fn quadratic_matches_monte_carlo_oracle() {
        let x = [0.3, -1.1];
        let z = [0.7, 0.4];
        let mut rng = stream(4, domain::MISC, 0);
        let n = 400_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let w: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let s = 4.0 * dot(&w, &x) * dot(&w, &z) * dot(&x, &z);
            acc += s;
            acc2 += s * s;
        }
        let mean = acc / n as f64;
        let sd = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = base_kernel(&x, &z, Activation::Quadratic).unwrap();
        assert!((mean - exact).abs() < 4.0 * sd, "MC {mean} vs {exact}");
    }

    #[test]
    fn zero_and_nonfinite_inputs_are_rejected() {
        let x = vec![vec![1.0, 2.0], vec![0.0, 0.0]];
        assert!(matches!(
            analytic_ntk_mlp(&x, Activation::Relu),
            Err(Error::DegenerateInput(_))
        ));
        let y = vec![vec![1.0, f64::NAN]];
        assert!(matches!(
            analytic_ntk_mlp(&y, Activation::Relu),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn nearly_parallel_inputs_keep_full_precision() {
        let x = [1.0, 0.0];
        let z = [1.0, 1e-9];
        // angle = atan(1e-9); value = (pi - angle) / (2 pi) to first order
        let exact = (PI - 1e-9) / (2.0 * PI);
        let got = base_kernel(&x, &z, Activation::Relu).unwrap();
        assert!((got - exact).abs() < 1e-15, "{got} vs {exact}");
        let anti = base_kernel(&x, &[-3.0, 0.0], Activation::Relu).unwrap();
        assert_eq!(anti, 0.0);
    }

    #[test]
    fn relu_kernel_is_scale_covariant() {
        let x = [0.3, -0.2, 1.5];
        let z = [-0.4, 0.9, 0.1];
        let base = base_kernel(&x, &z, Activation::Relu).unwrap();
        for c in [0.1, 2.0, 37.0] {
            let cx: Vec<f64> = x.iter().map(|v| v * c).collect();
            let scaled = base_kernel(&cx, &z, Activation::Relu).unwrap();
            assert!((scaled - c * base).abs() < 1e-12 * (1.0 + scaled.abs()));
        }
    }

    #[test]
    fn gnn_kernel_single_node_matches_mlp() {
        let ds = generate_gaussian_nodes(15, 1, 4, 2).unwrap();
        let x = ds.flattened();
        let a = analytic_ntk_mlp(&x, Activation::Relu).unwrap();
        let b = analytic_ntk_gnn(&x, 4, Activation::Relu).unwrap();
        assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn gnn_kernel_identical_nodes() {
        let x = [0.5, -1.0, 2.0];
        let graph: Vec<f64> = x.iter().copied().cycle().take(3 * 5).collect();
        let h = analytic_ntk_gnn(&[graph], 3, Activation::Relu).unwrap();
        let expected = 25.0 * base_kernel(&x, &x, Activation::Relu).unwrap();
        assert!((h.get(0, 0) - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn gnn_kernel_ignores_node_order() {
        let ds = generate_gaussian_nodes(12, 5, 3, 6).unwrap();
        let h = analytic_ntk_gnn(&ds.flattened(), 3, Activation::Relu).unwrap();
        let mut rng = stream(1, domain::MISC, 9);
        let shuffled: Vec<Vec<f64>> = (0..ds.m)
            .map(|j| Permutation::random(5, &mut rng).apply_rows(ds.sample(j), 3))
            .collect();
        let h2 = analytic_ntk_gnn(&shuffled, 3, Activation::Relu).unwrap();
        assert!((h.entries() - h2.entries()).abs().max() < 1e-12 * h.entries().abs().max());
    }

    #[test]
    fn kernels_satisfy_invariants() {
        let ds = generate_gaussian_nodes(40, 3, 4, 8).unwrap();
        for act in [Activation::Relu, Activation::Quadratic] {
            analytic_ntk_mlp(&ds.flattened(), act)
                .unwrap()
                .check_invariants()
                .unwrap();
            analytic_ntk_gnn(&ds.flattened(), 4, act)
                .unwrap()
                .check_invariants()
                .unwrap();
        }
    }
}
