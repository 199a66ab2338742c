//! Property tests over the public API: relabelling users, shuffling nodes and
//! rescaling inputs must act on outputs exactly as the models predict.

use num_complex::Complex64;
use proptest::prelude::*;

use ntklab::kernels::{analytic_ntk_gnn, analytic_ntk_mlp, empirical_ntk, Activation, ArchSpec};
use ntklab::netsim::{
    apply_permutation, rayleigh_instance, sinr, weighted_sum_rate, wmmse, NetworkInstance, Permutation,
    PowerAllocation, PreparedInstance, DEFAULT_WMMSE_ITERS, DEFAULT_WMMSE_TOL,
};
use ntklab::nets::{Input, Model, PowerMlp, TwoLayerNet, WcgcnNet};
use ntklab::rng::{domain, stream};

fn instance(k: usize) -> impl Strategy<Value = NetworkInstance> {
    (
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), k * k),
        prop::collection::vec(0.1f64..3.0, k),
        prop::collection::vec(0.05f64..2.0, k),
    )
        .prop_map(move |(h, w, s)| {
            let h = h.into_iter().map(|(re, im)| Complex64::new(re, im)).collect();
            NetworkInstance::new(k, h, w, s).unwrap()
        })
}

fn case() -> impl Strategy<Value = (NetworkInstance, Vec<f64>, Permutation)> {
    (1usize..8).prop_flat_map(|k| {
        (
            instance(k),
            prop::collection::vec(0.0f64..=1.0, k),
            Just((0..k).collect::<Vec<usize>>()).prop_shuffle(),
        )
            .prop_map(|(inst, p, map)| (inst, p, Permutation::new(map).unwrap()))
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sum_rate_is_permutation_invariant((inst, p, pi) in case()) {
        let p = PowerAllocation::new(p).unwrap();
        let (inst2, p2) = apply_permutation(&inst, &p, &pi).unwrap();
        let a = weighted_sum_rate(&inst, &p).unwrap();
        let b = weighted_sum_rate(&inst2, &p2).unwrap();
        prop_assert!(rel_close(a, b, 1e-12), "{a} vs {b}");
    }

    #[test]
    fn sinr_moves_with_the_users((inst, p, pi) in case()) {
        let p = PowerAllocation::new(p).unwrap();
        let (inst2, p2) = apply_permutation(&inst, &p, &pi).unwrap();
        let s = sinr(&inst, &p).unwrap();
        let s2 = sinr(&inst2, &p2).unwrap();
        prop_assert_eq!(pi.apply(&s).len(), s2.len());
        for (a, b) in pi.apply(&s).iter().zip(&s2) {
            prop_assert!(rel_close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn inverse_permutation_restores_the_instance((inst, p, pi) in case()) {
        let p = PowerAllocation::new(p).unwrap();
        let (inst2, p2) = apply_permutation(&inst, &p, &pi).unwrap();
        let (back, pb) = apply_permutation(&inst2, &p2, &pi.inverse()).unwrap();
        prop_assert_eq!(back, inst);
        prop_assert_eq!(pb, p);
    }

    #[test]
    fn wmmse_is_feasible_and_beats_full_power(k in 1usize..8, seed in 0u64..1000) {
        let inst = rayleigh_instance(k, seed, 0);
        let r = wmmse(&inst, DEFAULT_WMMSE_ITERS, DEFAULT_WMMSE_TOL).unwrap();
        prop_assert!(r.power.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let full = weighted_sum_rate(&inst, &PowerAllocation::full(k)).unwrap();
        prop_assert!(r.objective() >= full - 1e-9);
    }

    #[test]
    fn wcgcn_is_permutation_equivariant(k in 2usize..7, seed in 0u64..200, net_seed in 0u64..50) {
        let inst = rayleigh_instance(k, seed, 1);
        let pi = Permutation::random(k, &mut stream(seed, domain::MISC, 3));
        let p = PowerAllocation::full(k);
        let (inst2, _) = apply_permutation(&inst, &p, &pi).unwrap();
        let net = WcgcnNet::new(8, 2, net_seed).unwrap();
        let out = net.forward(&Input::Network(&PreparedInstance::new(inst))).unwrap();
        let out2 = net.forward(&Input::Network(&PreparedInstance::new(inst2))).unwrap();
        for (a, b) in pi.apply(&out).iter().zip(&out2) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        prop_assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn power_mlp_outputs_are_feasible(k in 1usize..6, seed in 0u64..200) {
        let net = PowerMlp::for_users(k, &[12], seed).unwrap();
        let inst = PreparedInstance::new(rayleigh_instance(k, seed, 2));
        let out = net.forward(&Input::Network(&inst)).unwrap();
        prop_assert_eq!(out.len(), k);
        prop_assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

fn samples(m: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(-3.0f64..3.0, d).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3)),
        m,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn analytic_kernels_are_symmetric_psd(x in samples(8, 3), quad in any::<bool>()) {
        let act = if quad { Activation::Quadratic } else { Activation::Relu };
        analytic_ntk_mlp(&x, act).unwrap().check_invariants().unwrap();
        let graphs: Vec<Vec<f64>> = x.chunks(2).map(|c| c.concat()).collect();
        analytic_ntk_gnn(&graphs, 3, act).unwrap().check_invariants().unwrap();
    }

    #[test]
    fn gnn_kernel_ignores_node_order(x in samples(12, 2), seed in 0u64..100) {
        let graphs: Vec<Vec<f64>> = x.chunks(3).map(|c| c.concat()).collect();
        let mut rng = stream(seed, domain::MISC, 0);
        let shuffled: Vec<Vec<f64>> = graphs
            .iter()
            .map(|g| Permutation::random(3, &mut rng).apply_rows(g, 2))
            .collect();
        let a = analytic_ntk_gnn(&graphs, 2, Activation::Relu).unwrap();
        let b = analytic_ntk_gnn(&shuffled, 2, Activation::Relu).unwrap();
        let scale = a.entries().abs().max().max(1.0);
        prop_assert!((a.entries() - b.entries()).abs().max() <= 1e-12 * scale);
    }

    #[test]
    fn relu_kernel_is_positively_homogeneous(x in samples(5, 4), c in 0.01f64..50.0) {
        let a = analytic_ntk_mlp(&x, Activation::Relu).unwrap();
        let cx: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        let b = analytic_ntk_mlp(&cx, Activation::Relu).unwrap();
        let diff = (b.entries() - a.entries() * (c * c)).abs().max();
        prop_assert!(diff <= 1e-10 * b.entries().abs().max().max(1.0));
    }

    #[test]
    fn empirical_kernel_is_symmetric_psd(x in samples(6, 3), seed in 0u64..100) {
        let net = TwoLayerNet::init(ArchSpec::flat(3, Activation::Relu), 64, seed).unwrap();
        let inputs: Vec<Input> = x.iter().map(|v| Input::Vector(v)).collect();
        empirical_ntk(&net, &inputs).unwrap().check_invariants().unwrap();
    }
}
