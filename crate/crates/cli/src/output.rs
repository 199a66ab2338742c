//! Output directories with atomic writes and checksum manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliResult;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: impl Into<PathBuf>) -> CliResult<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes `rel` via a temporary sibling and a rename, so readers never
    /// see a partial file.
    pub fn write(&self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let target = self.path(rel);
        if let Some(dir) = target.parent() {
            fs::create_dir_all(dir)?;
        }
        let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("out");
        let tmp = target.with_file_name(format!(".{name}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &target)?;
        Ok(())
    }

    /// Renders into a buffer with `f`, then writes it atomically.
    pub fn write_with<F>(&self, rel: &str, f: F) -> CliResult<()>
    where
        F: FnOnce(&mut Vec<u8>) -> CliResult<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    /// Every regular file under the root except the manifest, as sorted
    /// `/`-separated relative paths.
    pub fn files(&self) -> CliResult<Vec<String>> {
        let mut out = Vec::new();
        walk(&self.root, &self.root, &mut out)?;
        out.retain(|p| p != MANIFEST);
        out.sort();
        Ok(out)
    }

    /// Writes `manifest.txt`: comment lines with `header` pairs, then one
    /// `path<TAB>sha256` line per file.
    pub fn write_manifest(&self, header: &[(&str, String)]) -> CliResult<()> {
        let mut text = String::new();
        for (k, v) in header {
            text.push_str(&format!("# {k}: {v}\n"));
        }
        for rel in self.files()? {
            let digest = sha256_file(&self.path(&rel))?;
            text.push_str(&format!("{rel}\t{digest}\n"));
        }
        self.write(MANIFEST, text.as_bytes())
    }
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> CliResult<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        let ty = entry.file_type()?;
        if ty.is_dir() {
            walk(root, &path, out)?;
        } else if ty.is_file() {
            let name = entry.file_name();
            if name.to_string_lossy().ends_with(".tmp") {
                continue;
            }
            let rel = path.strip_prefix(root).expect("under root");
            let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.push(parts.join("/"));
        }
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses a manifest into `(path, sha256)` pairs, skipping comments.
pub fn read_manifest(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| l.split_once('\t'))
        .map(|(p, h)| (p.to_string(), h.to_string()))
        .collect()
}
