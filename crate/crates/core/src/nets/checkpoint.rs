//! Plain-text checkpoints.
//!
//! ```text
//! ntklab-checkpoint 1
//! arch wcgcn hidden=32 layers=2
//! tensor layer0.mlp1 2336 <values...>
//! end
//! ```
//!
//! Every `tensor` line holds a name, a shape written as `AxBx...`, and the
//! values in row-major order with 17 significant digits.

use std::io::{BufRead, Write};

use super::mlp::Dense;
use super::wcgcn::EDGE_IN;
use super::{PowerMlp, TwoLayerNet, WcgcnNet};
use crate::kernels::{Activation, ArchSpec, Family};
use crate::netsim::io::fmt_f64;
use crate::{Error, Result};

const MAGIC: &str = "ntklab-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    fn new(name: impl Into<String>, shape: Vec<usize>, values: &[f64]) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self {
            name: name.into(),
            shape,
            values: values.to_vec(),
        }
    }
}

/// A network that can be saved as an architecture line plus tensors.
pub trait Checkpoint: Sized {
    fn arch_line(&self) -> String;
    fn tensors(&self) -> Vec<Tensor>;
    fn from_parts(arch: &str, tensors: Vec<Tensor>) -> Result<Self>;
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn fields(arch: &str, kind: &str) -> Result<Vec<(String, String)>> {
    let mut words = arch.split_whitespace();
    if words.next() != Some(kind) {
        return Err(parse_err(format!("checkpoint is not a {kind} network: '{arch}'")));
    }
    words
        .map(|w| {
            w.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| parse_err(format!("bad architecture field '{w}'")))
        })
        .collect()
}

fn field<T: std::str::FromStr>(fields: &[(String, String)], key: &str) -> Result<T> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| parse_err(format!("missing or malformed field '{key}'")))
}

fn take(tensors: &mut Vec<Tensor>, name: &str) -> Result<Vec<f64>> {
    let pos = tensors
        .iter()
        .position(|t| t.name == name)
        .ok_or_else(|| parse_err(format!("missing tensor '{name}'")))?;
    Ok(tensors.remove(pos).values)
}

impl Checkpoint for TwoLayerNet {
    fn arch_line(&self) -> String {
        let arch = self.arch();
        let node_dim = match arch.family {
            Family::FlatMlp => 0,
            Family::PermInvGnn { node_dim } => node_dim,
        };
        format!(
            "two-layer activation={} input_dim={} node_dim={node_dim} width={}",
            arch.activation,
            arch.input_dim,
            self.width()
        )
    }

    fn tensors(&self) -> Vec<Tensor> {
        let d = self.arch().neuron_dim();
        vec![
            Tensor::new("w", vec![self.width(), d], super::Model::params(self)),
            Tensor::new("a", vec![self.width()], self.signs()),
        ]
    }

    fn from_parts(arch: &str, mut tensors: Vec<Tensor>) -> Result<Self> {
        let f = fields(arch, "two-layer")?;
        let activation: Activation = field::<String>(&f, "activation")?.parse()?;
        let input_dim: usize = field(&f, "input_dim")?;
        let node_dim: usize = field(&f, "node_dim")?;
        let spec = if node_dim == 0 {
            ArchSpec::flat(input_dim, activation)
        } else {
            ArchSpec {
                family: Family::PermInvGnn { node_dim },
                activation,
                input_dim,
            }
        };
        let w = take(&mut tensors, "w")?;
        let a = take(&mut tensors, "a")?;
        TwoLayerNet::from_parts(spec, w, a)
    }
}

impl Checkpoint for PowerMlp {
    fn arch_line(&self) -> String {
        let sizes: Vec<String> = self.sizes().iter().map(|s| s.to_string()).collect();
        format!("mlp sizes={}", sizes.join("x"))
    }

    fn tensors(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        let mut off = 0;
        for (l, w) in self.sizes().windows(2).enumerate() {
            let p = super::Model::params(self);
            out.push(Tensor::new(format!("layer{l}.weight"), vec![w[1], w[0]], &p[off..off + w[0] * w[1]]));
            off += w[0] * w[1];
            out.push(Tensor::new(format!("layer{l}.bias"), vec![w[1]], &p[off..off + w[1]]));
            off += w[1];
        }
        out
    }

    fn from_parts(arch: &str, mut tensors: Vec<Tensor>) -> Result<Self> {
        let f = fields(arch, "mlp")?;
        let sizes: Vec<usize> = field::<String>(&f, "sizes")?
            .split('x')
            .map(|s| s.parse().map_err(|_| parse_err(format!("bad layer size '{s}'"))))
            .collect::<Result<_>>()?;
        if sizes.len() < 2 {
            return Err(parse_err("an MLP needs at least two layer sizes"));
        }
        let mut params = Vec::new();
        for l in 0..sizes.len() - 1 {
            params.extend(take(&mut tensors, &format!("layer{l}.weight"))?);
            params.extend(take(&mut tensors, &format!("layer{l}.bias"))?);
        }
        PowerMlp::from_params(sizes, params)
    }
}

fn dense_tensors(prefix: &str, dense_sizes: &[usize], p: &[f64], out: &mut Vec<Tensor>) {
    let mut off = 0;
    for (l, w) in dense_sizes.windows(2).enumerate() {
        out.push(Tensor::new(format!("{prefix}.{l}.weight"), vec![w[1], w[0]], &p[off..off + w[0] * w[1]]));
        off += w[0] * w[1];
        out.push(Tensor::new(format!("{prefix}.{l}.bias"), vec![w[1]], &p[off..off + w[1]]));
        off += w[1];
    }
}

impl Checkpoint for WcgcnNet {
    fn arch_line(&self) -> String {
        format!("wcgcn hidden={} layers={}", self.hidden(), self.layers())
    }

    fn tensors(&self) -> Vec<Tensor> {
        let h = self.hidden();
        let s1 = [EDGE_IN, h, h];
        let s2 = [h + 2, h, 1];
        let per = self.mlp1_len() + self.mlp2_len();
        let p = super::Model::params(self);
        let mut out = Vec::new();
        for j in 0..self.layers() {
            let (a, b) = p[j * per..(j + 1) * per].split_at(self.mlp1_len());
            dense_tensors(&format!("conv{j}.mlp1"), &s1, a, &mut out);
            dense_tensors(&format!("conv{j}.mlp2"), &s2, b, &mut out);
        }
        out
    }

    fn from_parts(arch: &str, mut tensors: Vec<Tensor>) -> Result<Self> {
        let f = fields(arch, "wcgcn")?;
        let hidden: usize = field(&f, "hidden")?;
        let layers: usize = field(&f, "layers")?;
        let mut params = Vec::new();
        for j in 0..layers {
            for (name, sizes) in [("mlp1", [EDGE_IN, hidden, hidden]), ("mlp2", [hidden + 2, hidden, 1])] {
                for l in 0..Dense::new(sizes.to_vec()).sizes().len() - 1 {
                    params.extend(take(&mut tensors, &format!("conv{j}.{name}.{l}.weight"))?);
                    params.extend(take(&mut tensors, &format!("conv{j}.{name}.{l}.bias"))?);
                }
            }
        }
        WcgcnNet::from_params(hidden, layers, params)
    }
}

pub fn save<N: Checkpoint, W: Write>(net: &N, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "arch {}", net.arch_line())?;
    for t in net.tensors() {
        let shape: Vec<String> = t.shape.iter().map(|s| s.to_string()).collect();
        write!(out, "tensor {} {}", t.name, shape.join("x"))?;
        for v in &t.values {
            write!(out, " {}", fmt_f64(*v))?;
        }
        writeln!(out)?;
    }
    writeln!(out, "end")?;
    Ok(())
}

pub fn load<N: Checkpoint, R: BufRead>(input: R) -> Result<N> {
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| parse_err("unexpected end of checkpoint"))
    };
    if next()?.trim() != MAGIC {
        return Err(parse_err("not a checkpoint file"));
    }
    let arch_line = next()?;
    let arch = arch_line
        .strip_prefix("arch ")
        .ok_or_else(|| parse_err("missing architecture line"))?
        .to_string();
    let mut tensors = Vec::new();
    loop {
        let line = next()?;
        let line = line.trim();
        if line == "end" {
            break;
        }
        let mut words = line.split_whitespace();
        if words.next() != Some("tensor") {
            return Err(parse_err(format!("unexpected line '{line}'")));
        }
        let name = words.next().ok_or_else(|| parse_err("tensor without a name"))?;
        let shape: Vec<usize> = words
            .next()
            .ok_or_else(|| parse_err("tensor without a shape"))?
            .split('x')
            .map(|s| s.parse().map_err(|_| parse_err(format!("bad shape in tensor '{name}'"))))
            .collect::<Result<_>>()?;
        let values: Vec<f64> = words
            .map(|w| w.parse().map_err(|_| parse_err(format!("bad value '{w}' in tensor '{name}'"))))
            .collect::<Result<_>>()?;
        if values.len() != shape.iter().product::<usize>() {
            return Err(parse_err(format!("tensor '{name}' has the wrong number of values")));
        }
        tensors.push(Tensor {
            name: name.to_string(),
            shape,
            values,
        });
    }
    N::from_parts(&arch, tensors)
}
