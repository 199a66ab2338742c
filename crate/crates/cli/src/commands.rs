//! Command-line surface: argument parsing, thread setup and the
//! non-experiment subcommands.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use ntklab::kernels::{
    analytic_ntk_gnn, analytic_ntk_mlp, empirical_ntk, io as kio, mc_ntk, ArchSpec, KernelMatrix,
};
use ntklab::netsim::io::{fmt_f64, read_dataset, write_dataset};
use ntklab::netsim::{generate_gaussian_nodes, generate_instances, synthetic_labels, Dataset, NodeFeatures};
use ntklab::nets::checkpoint;
use ntklab::nets::{
    policy_rates, FullPowerPolicy, Input, LossKind, Model, NetPolicy, PowerMlp, TrainConfig, TwoLayerNet,
    WcgcnNet, WmmsePolicy,
};
use ntklab::rng::derive_seed;
use ntklab::spectral::{eig_sym, report};

use crate::config::{parse_activation, parse_optimizer, Config};
use crate::experiments::{self, ExperimentId};
use crate::output::OutDir;
use crate::{plots, CliError, CliResult, VERSION};

pub const THREADS_ENV: &str = "NTKLAB_THREADS";

const EXPERIMENTS: [&str; 6] = ["fig1", "fig2", "fig3", "ntk-regime", "thm3", "thm4-thm5"];

#[derive(Debug, Parser)]
#[command(name = "ntklab", version = VERSION, about = "Neural tangent kernel experiments for permutation-invariant power control")]
pub struct Cli {
    /// TOML file laid over the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (falls back to NTKLAB_THREADS, then all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Shrinks sample counts, epochs and widths by this factor.
    #[arg(long, global = true, value_name = "X", default_value_t = 1.0)]
    pub scale: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate Rayleigh interference-channel instances with WMMSE rates.
    Gen {
        /// Users per instance (default from [gen]).
        #[arg(long)]
        users: Option<usize>,
        /// Number of instances (default from [gen]).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Compute a tangent kernel Gram matrix.
    Ntk {
        /// Dataset written by `gen`, used instead of generating samples.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
    /// Eigen-decompose a kernel (from a file or computed as `ntk` would).
    Spectral {
        /// Text kernel written by `ntk`.
        #[arg(long, value_name = "PATH")]
        kernel: Option<PathBuf>,
    },
    /// Train a power-control network; requires --config.
    Train,
    /// Run one of the experiments.
    Exp {
        #[arg(value_parser = EXPERIMENTS)]
        id: String,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("\nRun 'ntklab --help' for usage.");
            }
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{THREADS_ENV}='{v}' is not a thread count")))?,
            ),
            _ => None,
        },
    };
    if n == Some(0) {
        return Err(CliError::Usage("thread count must be positive".into()));
    }
    Ok(n)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = thread_count(cli.threads)? {
        // Fails only if the pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if matches!(cli.command, Command::Train) && cli.config.is_none() {
        return Err(CliError::Usage("train requires --config PATH".into()));
    }
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let cfg = cfg.scaled(cli.scale)?;
    let out = OutDir::create(&cli.out)?;
    let start = Instant::now();
    let (label, result) = match &cli.command {
        Command::Gen { users, samples } => ("gen".to_string(), cmd_gen(&cfg, &out, *users, *samples)),
        Command::Ntk { input } => ("ntk".to_string(), cmd_ntk(&cfg, &out, input.as_deref())),
        Command::Spectral { kernel } => ("spectral".to_string(), cmd_spectral(&cfg, &out, kernel.as_deref())),
        Command::Train => ("train".to_string(), cmd_train(&cfg, &out)),
        Command::Exp { id } => {
            let id: ExperimentId = id.parse()?;
            (format!("exp {id}"), experiments::run(id, &cfg, &out))
        }
    };
    // Partial artifacts of a failed run are still recorded.
    out.write("config.toml", cfg.to_toml().as_bytes())?;
    out.write_manifest(&[
        ("version", VERSION.to_string()),
        ("command", label),
        ("seed", cfg.seed.to_string()),
        ("scale", cli.scale.to_string()),
        ("status", if result.is_ok() { "ok".into() } else { "failed".into() }),
        ("wall_ms", start.elapsed().as_millis().to_string()),
    ])?;
    result
}

fn cmd_gen(cfg: &Config, out: &OutDir, users: Option<usize>, samples: Option<usize>) -> CliResult<()> {
    let k = users.unwrap_or(cfg.gen.users);
    let m = samples.unwrap_or(cfg.gen.samples);
    let ds = generate_instances(k, m, cfg.seed)?;
    out.write_with("dataset.csv", |buf| Ok(write_dataset(&ds, buf)?))?;
    let wmmse = policy_rates(&WmmsePolicy::default(), &ds.samples)?;
    let full = policy_rates(&FullPowerPolicy, &ds.samples)?;
    out.write_with("rates.csv", |buf| {
        writeln!(buf, "sample,wmmse_sum_rate,full_power_sum_rate")?;
        for (j, (w, f)) in wmmse.iter().zip(&full).enumerate() {
            writeln!(buf, "{j},{},{}", fmt_f64(*w), fmt_f64(*f))?;
        }
        Ok(())
    })
}

fn read_input(path: &Path) -> CliResult<Dataset> {
    let f = File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    Ok(read_dataset(BufReader::new(f))?)
}

type NtkInputs = (Vec<Vec<f64>>, usize, Option<Vec<f64>>);

/// Samples and node dimension for the `ntk` / `spectral` commands, with
/// synthetic labels when the samples are Gaussian.
fn ntk_inputs(cfg: &Config, input: Option<&Path>) -> CliResult<NtkInputs> {
    let c = &cfg.ntk;
    let channel = |ds: Dataset| -> NtkInputs {
        if c.arch == "mlp" {
            let x = ds.samples.iter().map(|s| s.flat.0.clone()).collect::<Vec<_>>();
            let d = x[0].len();
            (x, d, None)
        } else {
            ((0..ds.len()).map(|j| ds.node_rows(j)).collect(), ds.node_dim(), None)
        }
    };
    if let Some(path) = input {
        return Ok(channel(read_input(path)?));
    }
    match c.source.as_str() {
        "gaussian" => {
            let ds = generate_gaussian_nodes(c.samples, c.nodes, c.node_dim, cfg.seed)?;
            let beta = vec![1.0 / (c.node_dim as f64).sqrt(); c.node_dim];
            let y = synthetic_labels(&ds, &beta, 1)?;
            Ok((ds.flattened(), c.node_dim, Some(y)))
        }
        "channel" => Ok(channel(generate_instances(c.users, c.samples, cfg.seed)?)),
        other => Err(CliError::Usage(format!("unknown ntk source '{other}'"))),
    }
}

fn compute_kernel(cfg: &Config, x: &[Vec<f64>], node_dim: usize) -> CliResult<KernelMatrix> {
    let c = &cfg.ntk;
    let act = parse_activation(&c.activation)?;
    let len = x[0].len();
    let arch = match c.arch.as_str() {
        "mlp" => ArchSpec::flat(len, act),
        "gnn" => ArchSpec::perm_inv(len / node_dim, node_dim, act),
        other => return Err(CliError::Usage(format!("unknown ntk arch '{other}'"))),
    };
    arch.validate()?;
    let seed = derive_seed(cfg.seed, 1);
    Ok(match (c.method.as_str(), c.arch.as_str()) {
        ("analytic", "mlp") => analytic_ntk_mlp(x, act)?,
        ("analytic", _) => analytic_ntk_gnn(x, node_dim, act)?,
        ("mc", _) => mc_ntk(&arch, x, c.mc_draws, c.width, seed)?,
        ("empirical", _) => {
            let net = TwoLayerNet::init(arch, c.width, seed)?;
            let inputs: Vec<Input> = x.iter().map(|v| Input::Vector(v)).collect();
            empirical_ntk(&net, &inputs)?
        }
        (other, _) => return Err(CliError::Usage(format!("unknown ntk method '{other}'"))),
    })
}

fn cmd_ntk(cfg: &Config, out: &OutDir, input: Option<&Path>) -> CliResult<()> {
    let (x, d, _) = ntk_inputs(cfg, input)?;
    let k = compute_kernel(cfg, &x, d)?;
    out.write_with("kernel.txt", |buf| Ok(kio::write_text(&k, buf)?))?;
    out.write_with("summary.csv", |buf| {
        writeln!(buf, "key,value")?;
        writeln!(buf, "provenance,{}", k.provenance().to_string().replace(',', ";"))?;
        writeln!(buf, "samples,{}", k.dim())?;
        Ok(())
    })
}

fn cmd_spectral(cfg: &Config, out: &OutDir, kernel: Option<&Path>) -> CliResult<()> {
    let (k, y) = match kernel {
        Some(path) => {
            let f = File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
            (kio::read_text(BufReader::new(f))?, None)
        }
        None => {
            let (x, d, y) = ntk_inputs(cfg, None)?;
            (compute_kernel(cfg, &x, d)?, y)
        }
    };
    let r = eig_sym(&k, y.as_deref())?;
    out.write_with("eigenvalues.csv", |buf| Ok(report::write_eigenvalues(&r, buf)?))?;
    if r.alignment.is_some() {
        out.write_with("alignment.csv", |buf| Ok(report::write_alignment(&r, buf)?))?;
    }
    out.write_with("summary.csv", |buf| {
        writeln!(buf, "key,value")?;
        writeln!(buf, "lambda_max,{}", fmt_f64(r.lambda_max()))?;
        writeln!(buf, "lambda_min,{}", fmt_f64(r.lambda_min()))?;
        writeln!(buf, "condition_number,{}", fmt_f64(r.condition_number))?;
        writeln!(buf, "trace,{}", fmt_f64(r.trace))?;
        Ok(())
    })
}

fn cmd_train(cfg: &Config, out: &OutDir) -> CliResult<()> {
    let c = &cfg.train;
    let train_ds = generate_instances(c.users, c.train_samples, derive_seed(cfg.seed, 1))?;
    let test_ds = generate_instances(c.users, c.test_samples, derive_seed(cfg.seed, 2))?;
    let mut tcfg = TrainConfig::new(parse_optimizer(&c.optimizer)?, c.lr, c.epochs, LossKind::NegSumRate);
    tcfg.batch_size = Some(c.batch_size);
    tcfg.seed = derive_seed(cfg.seed, 3);
    let net_seed = derive_seed(cfg.seed, 4);
    let oracle = policy_rates(&WmmsePolicy::default(), &test_ds.samples)?;

    fn finish<M: Model + checkpoint::Checkpoint>(
        net: &M,
        test: &Dataset,
        oracle: &[f64],
        out: &OutDir,
    ) -> CliResult<()> {
        out.write_with("checkpoint.txt", |buf| Ok(checkpoint::save(net, buf)?))?;
        let e = ntklab::nets::evaluate_policy(&NetPolicy(net), &test.samples, oracle)?;
        out.write_with("summary.csv", |buf| {
            writeln!(buf, "key,value")?;
            writeln!(buf, "params,{}", net.num_params())?;
            writeln!(buf, "test_sum_rate,{}", fmt_f64(e.mean_sum_rate))?;
            writeln!(buf, "wmmse_sum_rate,{}", fmt_f64(e.oracle_sum_rate))?;
            writeln!(buf, "ratio_to_wmmse,{}", fmt_f64(e.ratio_to_wmmse))?;
            writeln!(buf, "e_gen,{}", fmt_f64(e.e_gen))?;
            Ok(())
        })
    }

    out.write("plot_train.py", plots::TRAIN.as_bytes())?;
    match c.model.as_str() {
        "wcgcn" => {
            let mut net = WcgcnNet::new(c.hidden, c.layers, net_seed)?;
            experiments::train_cell(&mut net, &train_ds, &test_ds, &tcfg, out, "trace.csv")?;
            finish(&net, &test_ds, &oracle, out)
        }
        _ => {
            let mut net = PowerMlp::for_users(c.users, &c.mlp_hidden, net_seed)?;
            experiments::train_cell(&mut net, &train_ds, &test_ds, &tcfg, out, "trace.csv")?;
            finish(&net, &test_ds, &oracle, out)
        }
    }
}
