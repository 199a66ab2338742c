//! Kernel matrix file formats.
//!
//! Text: the first line holds `m`, followed by `m` comma-separated rows with
//! 17 significant digits. Binary: magic `NTK1`, little-endian `u64` m, then
//! `m * m` little-endian `f64` in row-major order.

use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;

use super::{KernelMatrix, Provenance};
use crate::netsim::io::fmt_f64;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NTK1";

pub fn write_text<W: Write>(k: &KernelMatrix, mut out: W) -> Result<()> {
    let m = k.dim();
    writeln!(out, "{m}")?;
    for i in 0..m {
        let row: Vec<String> = (0..m).map(|j| fmt_f64(k.get(i, j))).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_text<R: BufRead>(input: R) -> Result<KernelMatrix> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| Error::Parse("empty kernel file".into()))??;
    let m: usize = first
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad kernel size '{first}'")))?;
    let mut values = Vec::with_capacity(m * m);
    for i in 0..m {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("kernel file ends before row {i}")))??;
        let row = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {i}: bad number '{v}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != m {
            return Err(Error::Parse(format!("row {i} has {} values, expected {m}", row.len())));
        }
        values.extend(row);
    }
    KernelMatrix::new(DMatrix::from_row_slice(m, m, &values), Provenance::Imported)
}

pub fn write_binary<W: Write>(k: &KernelMatrix, mut out: W) -> Result<()> {
    let m = k.dim();
    out.write_all(MAGIC)?;
    out.write_all(&(m as u64).to_le_bytes())?;
    for i in 0..m {
        for j in 0..m {
            out.write_all(&k.get(i, j).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<KernelMatrix> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not an NTK1 kernel file".into()));
    }
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    let m = usize::try_from(u64::from_le_bytes(buf))
        .map_err(|_| Error::Parse("kernel size overflows usize".into()))?;
    let mut values = Vec::with_capacity(m.saturating_mul(m).min(1 << 28));
    for _ in 0..m * m {
        input.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    KernelMatrix::new(DMatrix::from_row_slice(m, m, &values), Provenance::Imported)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{analytic_ntk_mlp, Activation};
    use crate::netsim::generate_gaussian_nodes;

    #[test]
    fn text_and_binary_roundtrip() {
        let x = generate_gaussian_nodes(7, 1, 3, 2).unwrap().flattened();
        let k = analytic_ntk_mlp(&x, Activation::Relu).unwrap();

        let mut text = Vec::new();
        write_text(&k, &mut text).unwrap();
        assert_eq!(read_text(text.as_slice()).unwrap().entries(), k.entries());

        let mut bin = Vec::new();
        write_binary(&k, &mut bin).unwrap();
        assert_eq!(bin.len(), 4 + 8 + 8 * 49);
        assert_eq!(&bin[..4], b"NTK1");
        assert_eq!(u64::from_le_bytes(bin[4..12].try_into().unwrap()), 7);
        // row-major: second value is H[0][1]
        assert_eq!(f64::from_le_bytes(bin[20..28].try_into().unwrap()), k.get(0, 1));
        assert_eq!(read_binary(bin.as_slice()).unwrap().entries(), k.entries());
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(read_binary(&b"NTK2\0\0\0\0\0\0\0\0"[..]).is_err());
    }
}
