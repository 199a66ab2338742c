//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test -p ntklab-cli --test acceptance`, or a
//! subset by number: `cargo test -p ntklab-cli --test acceptance -- 2 6`.
//! Failures are reported but only change the exit status with `--strict`.
//! Tolerances and time limits are fixed here, before any run.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use ntklab::kernels::{analytic_ntk_mlp, empirical_ntk, mc_ntk, Activation, ArchSpec, KernelMatrix, Provenance};
use ntklab::netsim::{
    apply_permutation, generate_gaussian_nodes, generate_instances, rayleigh_instance, synthetic_labels,
    weighted_sum_rate, Permutation, PowerAllocation,
};
use ntklab::nets::{
    loss_and_gradient, mean_loss, ExampleSource, Input, LossKind, Model, PowerMlp, TwoLayerNet, VectorDataset,
    WcgcnNet,
};
use ntklab::rng::{domain, stream};
use ntklab::spectral::{activation_constant, gradient_flow, KernelFlow};
use ntklab_cli::config::Config;
use ntklab_cli::experiments::{run_bounds, run_fig1, run_fig2, run_fig3, run_ntk_regime, BoundsParts};
use ntklab_cli::output::{read_manifest, OutDir};

const SEED: u64 = 20240601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ntklab-acceptance-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

// 1
fn permutation_invariance() -> Outcome {
    let tol = 1e-12;
    let mut worst: f64 = 0.0;
    for k in [2usize, 5, 20] {
        let mut rng = stream(SEED, domain::MISC, k as u64);
        for j in 0..100u64 {
            let inst = rayleigh_instance(k, SEED, j);
            let p = PowerAllocation::new((0..k).map(|_| rng.random::<f64>()).collect()).unwrap();
            let pi = Permutation::random(k, &mut rng);
            let (inst2, p2) = apply_permutation(&inst, &p, &pi).unwrap();
            let a = weighted_sum_rate(&inst, &p).unwrap();
            let b = weighted_sum_rate(&inst2, &p2).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= tol, format!("max |difference| = {worst:.3e} (tol {tol:e})"))
}

// 2
fn activation_constants() -> Outcome {
    let q = activation_constant(2, Activation::Quadratic).unwrap();
    let r = activation_constant(2, Activation::Relu).unwrap();
    let expected = 1.0 / (2.0 * std::f64::consts::PI);
    outcome(
        q == 1.0 && r == expected,
        format!("c(2, quadratic) = {q}, c(2, relu) = {r} (1/(2 pi) = {expected})"),
    )
}

// 3
fn mc_consistency() -> Outcome {
    let ds = generate_gaussian_nodes(50, 1, 8, SEED).unwrap();
    let x = ds.flattened();
    let arch = ArchSpec::flat(8, Activation::Relu);
    let exact = analytic_ntk_mlp(&x, Activation::Relu).unwrap();
    // One draw unit is one hidden neuron.
    let width = 1000;
    let small = mc_ntk(&arch, &x, 2, width, SEED).unwrap().relative_frobenius_error(&exact);
    let large = mc_ntk(&arch, &x, 200, width, SEED).unwrap().relative_frobenius_error(&exact);
    outcome(
        large <= 2e-2 && large < small,
        format!("error at 2e3 units = {small:.4e}, at 2e5 units = {large:.4e} (tol 2e-2)"),
    )
}

// 4
fn finite_width_concentration() -> Outcome {
    let ds = generate_gaussian_nodes(30, 1, 8, SEED).unwrap();
    let x = ds.flattened();
    let exact = analytic_ntk_mlp(&x, Activation::Relu).unwrap();
    let inputs: Vec<Input> = x.iter().map(|v| Input::Vector(v)).collect();
    let errs: Vec<f64> = [256usize, 1024, 4096]
        .iter()
        .map(|&w| {
            let net = TwoLayerNet::init(ArchSpec::flat(8, Activation::Relu), w, SEED + w as u64).unwrap();
            empirical_ntk(&net, &inputs).unwrap().relative_frobenius_error(&exact)
        })
        .collect();
    outcome(
        errs.windows(2).all(|w| w[1] < w[0]),
        format!("errors at widths 256/1024/4096 = {:.4e} / {:.4e} / {:.4e}", errs[0], errs[1], errs[2]),
    )
}

// 5
fn kernel_dynamics_match() -> Outcome {
    let m = 50;
    let mut worst: f64 = 0.0;
    for trial in 0..3u64 {
        let mut rng = stream(SEED, domain::MISC, 100 + trial);
        let a = DMatrix::<f64>::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut h = &a * a.transpose() / m as f64;
        for i in 0..m {
            h[(i, i)] += 0.05;
        }
        let y = DVector::<f64>::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let km = KernelMatrix::new(h.clone(), Provenance::Imported).unwrap();
        let times = [0.0, 0.05, 0.3, 1.0, 2.5, 6.0];
        let rk4 = gradient_flow(&km, y.as_slice(), &times, 1e-2).unwrap();
        let flow = KernelFlow::new(&km, y.as_slice()).unwrap();
        for (t, r) in times.iter().zip(&rk4) {
            // Independent oracle: Pade matrix exponential.
            let exact = (&h * -*t).exp() * &y;
            worst = worst.max(rel_err(&DVector::from_column_slice(r), &exact));
            let closed = DVector::from_vec(flow.residual(*t).unwrap());
            worst = worst.max(rel_err(&closed, &exact));
        }
    }
    let out = OutDir::create(scratch("ntk-regime")).unwrap();
    let report = run_ntk_regime(&Config::defaults(), &out).unwrap();
    let _ = std::fs::remove_dir_all(out.root());
    let wide = report.row(4096).map(|r| r.max_deviation).unwrap_or(f64::INFINITY);
    let devs: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{}: {:.4}", r.width, r.max_deviation))
        .collect();
    outcome(
        worst <= 1e-6 && wide <= 0.10,
        format!(
            "flow max rel error = {worst:.3e} (tol 1e-6); trajectory deviation {} (tol 0.10 at 4096)",
            devs.join(", ")
        ),
    )
}

// 6
fn fd_worst<M: Model + Clone, D: ExampleSource>(net: &M, data: &D, loss: LossKind, seed: u64, tol: f64) -> (f64, usize) {
    let (_, grad) = loss_and_gradient(net, data, None, loss).unwrap();
    let l0 = mean_loss(net, data, loss).unwrap();
    let mut rng = stream(seed, domain::MISC, 7);
    let h = 1e-5;
    let (mut checked, mut skipped, mut worst) = (0, 0usize, 0.0f64);
    while checked < 50 && skipped < 5000 {
        let i = rng.random_range(0..net.num_params());
        let mut a = net.clone();
        let mut b = net.clone();
        a.params_mut()[i] += h;
        b.params_mut()[i] -= h;
        let (la, lb) = (mean_loss(&a, data, loss).unwrap(), mean_loss(&b, data, loss).unwrap());
        // Differences straddling a ReLU kink or MAX switch are not derivatives.
        let (right, left) = ((la - l0) / h, (l0 - lb) / h);
        if (right - left).abs() > 1e-3 * (right.abs() + left.abs()).max(1e-3) {
            skipped += 1;
            continue;
        }
        let fd = (la - lb) / (2.0 * h);
        // Below its rounding error a central difference only resolves zero.
        let noise = 10.0 * f64::EPSILON * l0.abs().max(1.0) / h;
        worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(noise / tol));
        checked += 1;
    }
    (if checked == 50 { worst } else { f64::INFINITY }, skipped)
}

fn gradient_oracle() -> Outcome {
    let tol = 1e-5;
    let gauss = generate_gaussian_nodes(12, 4, 3, SEED).unwrap();
    let y = synthetic_labels(&gauss, &[0.5, -0.3, 0.8], 1).unwrap();
    let vec_ds = VectorDataset::new(gauss.flattened(), y).unwrap();
    let k = 4;
    let m = 8;
    let chan = generate_instances(k, m, SEED).unwrap();
    let labels = (0..m).map(|j| (j as f64 * 0.7).cos()).collect();
    let chan = chan.with_labels(labels).unwrap();

    let mut results: BTreeMap<String, f64> = BTreeMap::new();
    for act in [Activation::Relu, Activation::Quadratic] {
        let flat = TwoLayerNet::init(ArchSpec::flat(12, act), 64, 1).unwrap();
        let pooled = TwoLayerNet::init(ArchSpec::perm_inv(4, 3, act), 64, 2).unwrap();
        results.insert(format!("two-layer flat {act} / squared"), fd_worst(&flat, &vec_ds, LossKind::Squared, 1, tol).0);
        results.insert(format!("two-layer pooled {act} / squared"), fd_worst(&pooled, &vec_ds, LossKind::Squared, 2, tol).0);
    }
    let mlp = PowerMlp::for_users(k, &[16, 16], 3).unwrap();
    let gnn = WcgcnNet::new(8, 2, 4).unwrap();
    for loss in [LossKind::Squared, LossKind::NegSumRate] {
        results.insert(format!("power mlp / {loss}"), fd_worst(&mlp, &chan, loss, 3, tol).0);
        results.insert(format!("wcgcn / {loss}"), fd_worst(&gnn, &chan, loss, 4, tol).0);
    }
    let worst = results.values().copied().fold(0.0, f64::max);
    let detail: Vec<String> = results.iter().map(|(k, v)| format!("{k}: {v:.1e}")).collect();
    outcome(worst <= tol, format!("max rel error {worst:.2e} (tol {tol:e}); {}", detail.join(", ")))
}

// 7
fn fig2_reproduction() -> Outcome {
    let out = OutDir::create(scratch("fig2")).unwrap();
    let r = run_fig2(&Config::defaults(), &out).unwrap();
    let _ = std::fs::remove_dir_all(out.root());
    let conds: Vec<String> = r
        .rows
        .iter()
        .map(|row| format!("n={}: mlp {:.3e} gnn {:.3e}", row.n, row.cond_mlp, row.cond_gnn))
        .collect();
    let (inc, mg, gg) = (r.mlp_strictly_increasing(), r.mlp_growth(), r.gnn_growth());
    outcome(
        inc && mg >= 5.0 && gg <= 2.0,
        format!(
            "{}; mlp increasing = {inc}, mlp growth = {mg:.3e} (need >= 5), gnn growth = {gg:.3} (need <= 2)",
            conds.join("; ")
        ),
    )
}

// 8
fn fig1_reproduction() -> Outcome {
    let out = OutDir::create(scratch("fig1")).unwrap();
    let r = run_fig1(&Config::defaults(), &out).unwrap();
    let _ = std::fs::remove_dir_all(out.root());
    let loss_gap5 = r.test_loss_gap(5).unwrap();
    let (m20, g20) = (r.cell(20, "mlp").unwrap(), r.cell(20, "gnn").unwrap());
    let (gap5, gap20) = (r.ratio_gap(5).unwrap(), r.ratio_gap(20).unwrap());
    let pass = loss_gap5 <= 0.10
        && g20.test.mean_sum_rate > m20.test.mean_sum_rate
        && g20.test.ratio_to_wmmse >= 0.90
        && gap20 > gap5;
    outcome(
        pass,
        format!(
            "K=5 test-loss gap {loss_gap5:.4} (tol 0.10); K=20 sum rate gnn {:.4} vs mlp {:.4}, gnn ratio {:.4} (need >= 0.90); ratio gap K=20 {gap20:.4} vs K=5 {gap5:.4}",
            g20.test.mean_sum_rate, m20.test.mean_sum_rate, g20.test.ratio_to_wmmse
        ),
    )
}

// 9
fn fig3_reproduction() -> Outcome {
    let cfg = Config::defaults();
    let out = OutDir::create(scratch("fig3")).unwrap();
    let r = run_fig3(&cfg, &out).unwrap();
    let _ = std::fs::remove_dir_all(out.root());
    let (lo, hi) = (cfg.fig3.train_samples[0], *cfg.fig3.train_samples.last().unwrap());
    let e = |model: &str, m: usize| r.censored_epochs(model, m).unwrap();
    let (sm, sg) = (r.slowdown("mlp").unwrap(), r.slowdown("gnn").unwrap());
    let lambdas: Vec<String> = r.lambda.iter().map(|l| format!("{}: {:.3e}", l.m, l.lambda_min_mlp)).collect();
    let pass = r.lambda_mlp_non_increasing() && e("mlp", hi) > e("mlp", lo) && sg < sm;
    outcome(
        pass,
        format!(
            "mlp lambda_min {}; epochs to threshold mlp {} -> {}, gnn {} -> {}; slowdown mlp {sm:.3} gnn {sg:.3}",
            lambdas.join(", "),
            e("mlp", lo),
            e("mlp", hi),
            e("gnn", lo),
            e("gnn", hi)
        ),
    )
}

// 10
fn bound_orderings() -> Outcome {
    let out = OutDir::create(scratch("bounds")).unwrap();
    let r = run_bounds(&Config::defaults(), &out, BoundsParts::All).unwrap();
    let _ = std::fs::remove_dir_all(out.root());
    let mut pass = r.thm3_ordered();
    let mut detail = vec![format!("thm3 ordered at every t = {}", r.thm3_ordered())];
    for p in [1u32, 2] {
        let ratios: Vec<String> = r
            .thm45
            .iter()
            .filter(|row| row.p == p)
            .map(|row| row.ratio().map_or("-".into(), |v| format!("{v:.3}")))
            .collect();
        let res = r.residual_row(p, 20).unwrap();
        let faster = matches!((res.t_gnn, res.t_mlp), (Some(g), Some(m)) if g < m)
            || (res.t_gnn.is_some() && res.t_mlp.is_none());
        pass &= r.ratio_increasing(p) && faster;
        detail.push(format!(
            "p={p}: ratios {} increasing = {}; n=20 time to 1% gnn {:?} mlp {:?}",
            ratios.join("/"),
            r.ratio_increasing(p),
            res.t_gnn,
            res.t_mlp
        ));
    }
    outcome(pass, detail.join("; "))
}

// 11
fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_ntklab");
    let runs: [(&str, &str); 6] = [
        ("fig1", "0.02"),
        ("fig2", "0.2"),
        ("fig3", "0.02"),
        ("ntk-regime", "0.05"),
        ("thm3", "0.2"),
        ("thm4-thm5", "0.2"),
    ];
    let mut bad = Vec::new();
    for (id, scale) in runs {
        let manifests: Vec<Vec<(String, String)>> = ["1", "2"]
            .iter()
            .map(|threads| {
                let dir = scratch(&format!("det-{id}-{threads}"));
                let status = Command::new(exe)
                    .args(["exp", id, "--seed", "7", "--scale", scale, "--threads", threads, "--out"])
                    .arg(&dir)
                    .status()
                    .expect("binary runs");
                let text = std::fs::read_to_string(dir.join("manifest.txt")).unwrap_or_default();
                let _ = std::fs::remove_dir_all(&dir);
                if !status.success() {
                    bad.push(format!("{id} exited with {status}"));
                }
                read_manifest(&text)
            })
            .collect();
        let csvs = manifests[0].iter().filter(|(p, _)| p.ends_with(".csv")).count();
        if manifests[0] != manifests[1] || csvs == 0 {
            bad.push(format!("{id} checksums differ"));
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            "all six experiments reproduce identical checksums with 1 and 2 threads".to_string()
        } else {
            bad.join("; ")
        },
    )
}

type Criterion = (u32, &'static str, u64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "permutation invariance of the sum rate", 1, permutation_invariance),
        (2, "activation constants", 1, activation_constants),
        (3, "Monte Carlo kernel consistency", 120, mc_consistency),
        (4, "finite-width kernel concentration", 120, finite_width_concentration),
        (5, "kernel gradient-flow dynamics", 300, kernel_dynamics_match),
        (6, "gradient oracle", 60, gradient_oracle),
        (7, "condition-number landscape", 60, fig2_reproduction),
        (8, "MLP vs GNN power control", 1800, fig1_reproduction),
        (9, "sample size and convergence", 2700, fig3_reproduction),
        (10, "bound orderings on synthetic targets", 300, bound_orderings),
        (11, "thread-count determinism", 1800, determinism),
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    let strict = args.iter().any(|a| a == "--strict");
    let selected: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let mut run = 0;
    let mut failed = Vec::new();
    for (id, name, limit, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        run += 1;
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let pass = o.pass && in_time;
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} criterion {id:>2} ({name}): {} [{:.1} s, limit {limit} s]",
            o.detail,
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    println!("acceptance: {} of {run} criteria passed", run - failed.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        if strict {
            std::process::exit(1);
        }
    }
}
