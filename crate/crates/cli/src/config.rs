//! Layered TOML configuration: the embedded defaults, then an optional
//! user file, then command-line overrides.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use ntklab::kernels::Activation;
use ntklab::nets::Optimizer;
use ntklab::spectral::ConstantTable;

use crate::{CliError, CliResult};

pub const DEFAULTS: &str = include_str!("../configs/defaults.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub gen: GenConfig,
    pub ntk: NtkConfig,
    pub train: TrainSection,
    pub fig1: Fig1Config,
    pub fig2: Fig2Config,
    pub fig3: Fig3Config,
    pub ntk_regime: NtkRegimeConfig,
    pub bounds: BoundsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub users: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NtkConfig {
    pub source: String,
    pub nodes: usize,
    pub node_dim: usize,
    pub samples: usize,
    pub users: usize,
    pub arch: String,
    pub method: String,
    pub activation: String,
    pub mc_draws: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub model: String,
    pub users: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub optimizer: String,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub mlp_hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig1Config {
    pub users: Vec<usize>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub optimizer: String,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub mlp_layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2Config {
    pub n: Vec<usize>,
    pub samples: usize,
    pub node_dim: usize,
    pub activation: String,
    pub gnn_growth_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig3Config {
    pub users: usize,
    pub train_samples: Vec<usize>,
    pub test_samples: usize,
    pub optimizer: String,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub steps_per_epoch: usize,
    pub hidden: usize,
    pub layers: usize,
    pub mlp_hidden: Vec<usize>,
    pub threshold: f64,
    pub lambda_samples: Vec<usize>,
    pub activation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NtkRegimeConfig {
    pub input_dim: usize,
    pub samples: usize,
    pub widths: Vec<usize>,
    pub activation: String,
    pub step: f64,
    pub loss_reduction: f64,
    pub max_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub n: Vec<usize>,
    pub p: Vec<u32>,
    pub samples: usize,
    pub node_dim: usize,
    pub unit_nodes: bool,
    pub delta: f64,
    pub activation: String,
    pub time_points: usize,
    pub time_horizon: f64,
    pub residual_fraction: f64,
    pub constants: BTreeMap<String, f64>,
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn parse_activation(s: &str) -> CliResult<Activation> {
    s.parse().map_err(|e: ntklab::Error| CliError::Usage(e.to_string()))
}

pub fn parse_optimizer(s: &str) -> CliResult<Optimizer> {
    s.parse().map_err(|e: ntklab::Error| CliError::Usage(e.to_string()))
}

fn nonempty<T>(name: &str, v: &[T]) -> CliResult<()> {
    if v.is_empty() {
        return Err(CliError::Usage(format!("{name} must not be empty")));
    }
    Ok(())
}

fn positive(name: &str, v: usize) -> CliResult<()> {
    if v == 0 {
        return Err(CliError::Usage(format!("{name} must be positive")));
    }
    Ok(())
}

impl Config {
    pub fn defaults() -> Self {
        Self::from_layers(None).expect("embedded defaults are valid")
    }

    /// Defaults overlaid with `overlay` (TOML text).
    pub fn from_layers(overlay: Option<&str>) -> CliResult<Self> {
        let mut table: Table = DEFAULTS.parse().expect("embedded defaults parse");
        if let Some(text) = overlay {
            let over: Table = text
                .parse()
                .map_err(|e| CliError::Usage(format!("config: {e}")))?;
            merge(&mut table, over);
        }
        let cfg: Config = Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Self::from_layers(None),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_layers(Some(&text))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn constant_table(&self) -> CliResult<ConstantTable> {
        let mut t = ConstantTable::new();
        for (key, &v) in &self.bounds.constants {
            let (p, act) = key
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("constant key '{key}' is not '<p>:<activation>'")))?;
            let p: u32 = p
                .parse()
                .map_err(|_| CliError::Usage(format!("bad degree in constant key '{key}'")))?;
            t = t.with(p, parse_activation(act)?, v)?;
        }
        Ok(t)
    }

    pub fn validate(&self) -> CliResult<()> {
        positive("gen.users", self.gen.users)?;
        positive("gen.samples", self.gen.samples)?;
        for (name, v) in [
            ("ntk.nodes", self.ntk.nodes),
            ("ntk.node_dim", self.ntk.node_dim),
            ("ntk.samples", self.ntk.samples),
            ("ntk.users", self.ntk.users),
            ("ntk.mc_draws", self.ntk.mc_draws),
            ("ntk.width", self.ntk.width),
            ("train.users", self.train.users),
            ("train.train_samples", self.train.train_samples),
            ("train.test_samples", self.train.test_samples),
            ("train.epochs", self.train.epochs),
            ("train.batch_size", self.train.batch_size),
            ("fig1.train_samples", self.fig1.train_samples),
            ("fig1.test_samples", self.fig1.test_samples),
            ("fig1.epochs", self.fig1.epochs),
            ("fig2.samples", self.fig2.samples),
            ("fig2.node_dim", self.fig2.node_dim),
            ("fig3.users", self.fig3.users),
            ("fig3.test_samples", self.fig3.test_samples),
            ("fig3.epochs", self.fig3.epochs),
            ("fig3.steps_per_epoch", self.fig3.steps_per_epoch),
            ("ntk_regime.samples", self.ntk_regime.samples),
            ("ntk_regime.input_dim", self.ntk_regime.input_dim),
            ("bounds.samples", self.bounds.samples),
            ("bounds.node_dim", self.bounds.node_dim),
            ("bounds.time_points", self.bounds.time_points),
        ] {
            positive(name, v)?;
        }
        nonempty("fig1.users", &self.fig1.users)?;
        nonempty("fig2.n", &self.fig2.n)?;
        nonempty("fig3.train_samples", &self.fig3.train_samples)?;
        nonempty("fig3.lambda_samples", &self.fig3.lambda_samples)?;
        nonempty("ntk_regime.widths", &self.ntk_regime.widths)?;
        nonempty("bounds.n", &self.bounds.n)?;
        nonempty("bounds.p", &self.bounds.p)?;
        for name in [&self.ntk.activation, &self.fig2.activation, &self.fig3.activation, &self.ntk_regime.activation, &self.bounds.activation] {
            parse_activation(name)?;
        }
        for name in [&self.train.optimizer, &self.fig1.optimizer, &self.fig3.optimizer] {
            parse_optimizer(name)?;
        }
        if !["wcgcn", "mlp"].contains(&self.train.model.as_str()) {
            return Err(CliError::Usage(format!("unknown model '{}'", self.train.model)));
        }
        if !(self.bounds.delta > 0.0 && self.bounds.delta < 1.0) {
            return Err(CliError::Usage("bounds.delta must lie in (0, 1)".into()));
        }
        if !(self.fig3.threshold > 0.0 && self.fig3.threshold < 1.0) {
            return Err(CliError::Usage("fig3.threshold must lie in (0, 1)".into()));
        }
        if !(self.ntk_regime.step > 0.0 && self.ntk_regime.step < 1.0) {
            return Err(CliError::Usage("ntk_regime.step must lie in (0, 1)".into()));
        }
        self.constant_table()?;
        Ok(())
    }
}

/// Shrinks a count by `scale`, keeping at least `min` (or `n` if smaller).
pub fn scaled(n: usize, scale: f64, min: usize) -> usize {
    ((n as f64 * scale).round() as usize).max(min.min(n))
}

impl Config {
    /// Shrinks sample counts, epoch budgets and network widths uniformly.
    /// `scale = 1` is the identity.
    pub fn scaled(&self, scale: f64) -> CliResult<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(CliError::Usage(format!("scale {scale} must be positive")));
        }
        if scale == 1.0 {
            return Ok(self.clone());
        }
        const SAMPLES: usize = 16;
        const EPOCHS: usize = 2;
        let s = |n: usize, min: usize| scaled(n, scale, min);
        let mut c = self.clone();
        c.gen.samples = s(c.gen.samples, SAMPLES);
        c.ntk.samples = s(c.ntk.samples, SAMPLES);
        c.train.train_samples = s(c.train.train_samples, SAMPLES);
        c.train.test_samples = s(c.train.test_samples, SAMPLES);
        c.train.epochs = s(c.train.epochs, EPOCHS);
        c.fig1.train_samples = s(c.fig1.train_samples, SAMPLES);
        c.fig1.test_samples = s(c.fig1.test_samples, SAMPLES);
        c.fig1.epochs = s(c.fig1.epochs, EPOCHS);
        c.fig2.samples = s(c.fig2.samples, SAMPLES);
        c.fig3.train_samples = c.fig3.train_samples.iter().map(|&m| s(m, SAMPLES)).collect();
        c.fig3.test_samples = s(c.fig3.test_samples, SAMPLES);
        c.fig3.epochs = s(c.fig3.epochs, EPOCHS);
        c.fig3.lambda_samples = c.fig3.lambda_samples.iter().map(|&m| s(m, SAMPLES)).collect();
        c.ntk_regime.samples = s(c.ntk_regime.samples, SAMPLES);
        c.ntk_regime.widths = c.ntk_regime.widths.iter().map(|&w| s(w, 16)).collect();
        c.ntk_regime.max_epochs = s(c.ntk_regime.max_epochs, EPOCHS);
        c.bounds.samples = s(c.bounds.samples, SAMPLES);
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_load_and_roundtrip() {
        let cfg = Config::defaults();
        assert_eq!(cfg.fig2.samples, 300);
        let back = Config::from_layers(Some(&cfg.to_toml())).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overlay_changes_only_given_keys() {
        let cfg = Config::from_layers(Some("seed = 9\n[fig2]\nn = [1, 2]\n")).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.fig2.n, vec![1, 2]);
        assert_eq!(cfg.fig2.samples, 300);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Config::from_layers(Some("[fig2]\nsamplez = 3\n")).is_err());
        assert!(Config::from_layers(Some("[fig2]\nn = []\n")).is_err());
        assert!(Config::from_layers(Some("[bounds]\ndelta = 1.5\n")).is_err());
        assert!(Config::from_layers(Some("[fig2]\nactivation = \"tanh\"\n")).is_err());
        assert!(Config::from_layers(Some("not toml [")).is_err());
    }

    #[test]
    fn constants_from_config() {
        let t = Config::defaults().constant_table().unwrap();
        assert_eq!(t.get(1, Activation::Relu).unwrap(), 0.25);
        assert!(Config::from_layers(Some("[bounds.constants]\n\"x\" = 1.0\n")).is_err());
    }

    #[test]
    fn scaling_keeps_a_floor() {
        assert_eq!(scaled(5000, 0.01, 10), 50);
        assert_eq!(scaled(100, 0.01, 10), 10);
        assert_eq!(scaled(3, 0.01, 10), 3);
        let c = Config::defaults();
        assert_eq!(c.scaled(1.0).unwrap(), c);
        let small = c.scaled(0.1).unwrap();
        assert_eq!(small.fig3.train_samples, vec![200, 2000]);
        assert_eq!(small.fig2.n, c.fig2.n);
        assert!(c.scaled(0.0).is_err());
    }
}
