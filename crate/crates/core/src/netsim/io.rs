//! Dataset text format.
//!
//! ```text
//! # K=2,m=3,seed=7
//! sample,h_0_0_re,h_0_0_im,h_0_1_re,...,w_0,w_1,sigma2_0,sigma2_1[,label]
//! 0,1.2345678901234567e-1,...
//! ```
//!
//! Columns `h_{k}_{i}_{re|im}` hold the channel from transmitter `i` to
//! receiver `k`. Floats carry 17 significant digits, enough to round-trip
//! every `f64` exactly.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use super::{Dataset, NetworkInstance};
use crate::{Error, Result};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let k = ds.users;
    writeln!(out, "# K={k},m={},seed={}", ds.len(), ds.seed)?;
    let mut header = vec!["sample".to_string()];
    for rx in 0..k {
        for tx in 0..k {
            header.push(format!("h_{rx}_{tx}_re"));
            header.push(format!("h_{rx}_{tx}_im"));
        }
    }
    header.extend((0..k).map(|i| format!("w_{i}")));
    header.extend((0..k).map(|i| format!("sigma2_{i}")));
    if ds.labels.is_some() {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for (j, s) in ds.samples.iter().enumerate() {
        let inst = &s.instance;
        let mut row = vec![j.to_string()];
        for c in inst.channels() {
            row.push(fmt_f64(c.re));
            row.push(fmt_f64(c.im));
        }
        row.extend(inst.weights().iter().map(|&x| fmt_f64(x)));
        row.extend(inst.noise().iter().map(|&x| fmt_f64(x)));
        if let Some(labels) = &ds.labels {
            row.push(fmt_f64(labels[j]));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn parse_meta(line: &str) -> Result<(usize, u64)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("missing '# K=..' metadata line".into()))?;
    let mut k = None;
    let mut seed = 0;
    for kv in body.trim().split(',') {
        let (key, val) = kv
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad metadata entry '{kv}'")))?;
        match key.trim() {
            "K" => k = Some(val.trim().parse().map_err(|_| Error::Parse(format!("bad K '{val}'")))?),
            "seed" => seed = val.trim().parse().map_err(|_| Error::Parse(format!("bad seed '{val}'")))?,
            _ => {}
        }
    }
    Ok((k.ok_or_else(|| Error::Parse("metadata lacks K".into()))?, seed))
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let meta = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))??;
    let (k, seed) = parse_meta(&meta)?;
    let header = lines.next().ok_or_else(|| Error::Parse("missing header row".into()))??;
    let labelled = header.trim_end().ends_with(",label");
    let expected = 1 + 2 * k * k + 2 * k + usize::from(labelled);
    if header.split(',').count() != expected {
        return Err(Error::Parse(format!(
            "header has {} columns, expected {expected} for K = {k}",
            header.split(',').count()
        )));
    }
    let mut instances = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {line_no}: bad number '{v}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != expected - 1 {
            return Err(Error::Parse(format!(
                "row {line_no}: {} values, expected {}",
                vals.len(),
                expected - 1
            )));
        }
        let h = vals[..2 * k * k]
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        let w = vals[2 * k * k..2 * k * k + k].to_vec();
        let sigma2 = vals[2 * k * k + k..2 * k * k + 2 * k].to_vec();
        instances.push(NetworkInstance::new(k, h, w, sigma2)?);
        if labelled {
            labels.push(vals[2 * k * k + 2 * k]);
        }
    }
    let ds = Dataset::from_instances(instances, seed)?;
    if labelled {
        ds.with_labels(labels)
    } else {
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::generate_instances;

    #[test]
    fn roundtrip_is_lossless() {
        let ds = generate_instances(3, 4, 11)
            .unwrap()
            .with_labels(vec![0.1, -2.5, 1e-300, 7.0])
            .unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back.seed, 11);
        assert_eq!(back.labels, ds.labels);
        for j in 0..4 {
            assert_eq!(back.instance(j), ds.instance(j));
        }
    }

    #[test]
    fn malformed_input() {
        assert!(read_dataset("".as_bytes()).is_err());
        assert!(read_dataset("# K=1\nsample,h\n".as_bytes()).is_err());
    }
}
