use ntklab::netsim::{generate_instances, io::fmt_f64};
use ntklab::nets::{
    evaluate_policy, policy_rates, EvalMetrics, LossKind, Model, NetPolicy, PowerMlp, TrainConfig, TrainTrace,
    WcgcnNet, WmmsePolicy,
};
use ntklab::rng::derive_seed;

use super::{opt, tag, train_cell, write_lines};
use crate::config::{parse_optimizer, Config};
use crate::output::OutDir;
use crate::plots;
use crate::CliResult;

#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Cell {
    pub users: usize,
    /// `"mlp"` or `"gnn"`.
    pub model: &'static str,
    pub params: usize,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub test: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Report {
    pub cells: Vec<Fig1Cell>,
}

impl Fig1Report {
    pub fn cell(&self, users: usize, model: &str) -> Option<&Fig1Cell> {
        self.cells.iter().find(|c| c.users == users && c.model == model)
    }

    /// `|L_mlp - L_gnn| / |L_gnn|` for the final test losses.
    pub fn test_loss_gap(&self, users: usize) -> Option<f64> {
        let (m, g) = (self.cell(users, "mlp")?, self.cell(users, "gnn")?);
        Some((m.final_test_loss - g.final_test_loss).abs() / g.final_test_loss.abs())
    }

    /// GNN minus MLP test sum rate, as fractions of the WMMSE rate.
    pub fn ratio_gap(&self, users: usize) -> Option<f64> {
        let (m, g) = (self.cell(users, "mlp")?, self.cell(users, "gnn")?);
        Some(g.test.ratio_to_wmmse - m.test.ratio_to_wmmse)
    }
}

pub fn run_fig1(cfg: &Config, out: &OutDir) -> CliResult<Fig1Report> {
    let c = &cfg.fig1;
    let mut tcfg = TrainConfig::new(parse_optimizer(&c.optimizer)?, c.lr, c.epochs, LossKind::NegSumRate);
    tcfg.batch_size = Some(c.batch_size);
    let mut cells = Vec::new();
    let mut summary = Vec::new();
    for &k in &c.users {
        let key = k as u64;
        let train_ds = generate_instances(k, c.train_samples, derive_seed(cfg.seed, tag::TRAIN_DATA + key))?;
        let test_ds = generate_instances(k, c.test_samples, derive_seed(cfg.seed, tag::TEST_DATA + key))?;
        let oracle = policy_rates(&WmmsePolicy::default(), &test_ds.samples)?;
        let wmmse_loss = -oracle.iter().sum::<f64>() / oracle.len() as f64;
        tcfg.seed = derive_seed(cfg.seed, tag::SHUFFLE + key);
        let net_seed = derive_seed(cfg.seed, tag::NET + key);

        let mut gnn = WcgcnNet::new(c.hidden, c.layers, net_seed)?;
        let width = PowerMlp::matched_width(k, c.mlp_layers, gnn.num_params());
        let mut mlp = PowerMlp::for_users(k, &vec![width; c.mlp_layers], net_seed)?;

        let mlp_trace = train_cell(&mut mlp, &train_ds, &test_ds, &tcfg, out, &format!("K{k}/mlp/trace.csv"))?;
        let mlp_eval = evaluate_policy(&NetPolicy(&mlp), &test_ds.samples, &oracle)?;
        let gnn_trace = train_cell(&mut gnn, &train_ds, &test_ds, &tcfg, out, &format!("K{k}/gnn/trace.csv"))?;
        let gnn_eval = evaluate_policy(&NetPolicy(&gnn), &test_ds.samples, &oracle)?;

        let rows: Vec<String> = mlp_trace
            .rows
            .iter()
            .zip(&gnn_trace.rows)
            .map(|(a, b)| {
                format!(
                    "{},{},{},{},{},{}",
                    a.epoch,
                    fmt_f64(a.train_loss),
                    opt(a.test_loss),
                    fmt_f64(b.train_loss),
                    opt(b.test_loss),
                    fmt_f64(wmmse_loss)
                )
            })
            .collect();
        write_lines(
            out,
            &format!("fig1_K{k}.csv"),
            "epoch,mlp_train_loss,mlp_test_loss,gnn_train_loss,gnn_test_loss,wmmse_test_loss",
            &rows,
        )?;

        for (model, params, trace, eval) in [
            ("mlp", mlp.num_params(), &mlp_trace, mlp_eval),
            ("gnn", gnn.num_params(), &gnn_trace, gnn_eval),
        ] {
            let cell = cell(k, model, params, trace, eval);
            summary.push(format!(
                "{k},{model},{params},{},{},{},{},{}",
                fmt_f64(cell.final_train_loss),
                fmt_f64(cell.final_test_loss),
                fmt_f64(eval.mean_sum_rate),
                fmt_f64(eval.oracle_sum_rate),
                fmt_f64(eval.ratio_to_wmmse)
            ));
            cells.push(cell);
        }
    }
    write_lines(
        out,
        "summary.csv",
        "users,model,params,final_train_loss,final_test_loss,test_sum_rate,wmmse_sum_rate,ratio_to_wmmse",
        &summary,
    )?;
    out.write("plot_fig1.py", plots::FIG1.as_bytes())?;
    Ok(Fig1Report { cells })
}

fn cell(users: usize, model: &'static str, params: usize, trace: &TrainTrace, test: EvalMetrics) -> Fig1Cell {
    let last = trace.last().expect("trace has the initial row");
    Fig1Cell {
        users,
        model,
        params,
        final_train_loss: last.train_loss,
        final_test_loss: last.test_loss.unwrap_or(test.mean_loss),
        test,
    }
}
