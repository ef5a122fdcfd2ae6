//! Provenance records written next to every output.
//!
//! A record lists the tool version, the command, every parameter and the
//! SHA-256 of every input file, followed by an `[outputs]` block with the
//! digests of what was written. Rerunning the command with the listed
//! parameters on the listed inputs reproduces the outputs bit for bit.

use std::fmt::Display;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const FILE: &str = "provenance.txt";
const OUTPUTS: &str = "[outputs]";

pub fn digest_file(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

#[derive(Clone, Debug)]
pub struct Provenance {
    lines: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        let mut p = Self { lines: Vec::new() };
        p.set("tool", env!("CARGO_PKG_NAME"));
        p.set("version", env!("CARGO_PKG_VERSION"));
        p.set("command", command);
        p
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.lines.push((key.into(), value.to_string()));
        self
    }

    pub fn set_all<K: Into<String>, V: Display>(&mut self, prefix: &str, kv: impl IntoIterator<Item = (K, V)>) -> &mut Self {
        for (k, v) in kv {
            self.set(format!("{prefix}{}", k.into()), v);
        }
        self
    }

    /// Records an input file by path and content digest.
    pub fn input(&mut self, key: &str, path: &Path) -> Result<&mut Self> {
        let digest = digest_file(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.set(key, path.display());
        self.set(format!("{key}_sha256"), digest);
        Ok(self)
    }

    fn header(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Writes the record after the outputs exist.
    pub fn write(&self, path: &Path, outputs: &[PathBuf]) -> Result<()> {
        let mut text = self.header();
        text.push_str(OUTPUTS);
        text.push('\n');
        for o in outputs {
            let digest = digest_file(o).with_context(|| format!("cannot read output {}", o.display()))?;
            text.push_str(&format!("{}={digest}\n", file_label(o)));
        }
        fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    /// Whether `path` holds this exact record and every listed output is
    /// still present and unmodified.
    pub fn is_current(&self, path: &Path, outputs: &[PathBuf]) -> bool {
        let Ok(text) = fs::read_to_string(path) else {
            return false;
        };
        let Some((head, tail)) = text.split_once(&format!("{OUTPUTS}\n")) else {
            return false;
        };
        if head != self.header() {
            return false;
        }
        let recorded: Vec<&str> = tail.lines().collect();
        recorded.len() == outputs.len()
            && outputs.iter().zip(recorded).all(|(o, line)| {
                digest_file(o).map_or(false, |d| line == format!("{}={d}", file_label(o)))
            })
    }
}

fn file_label(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_detect_changes() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        let out = dir.path().join("out.csv");
        fs::write(&input, "a\n1\n").unwrap();
        fs::write(&out, "result").unwrap();
        let mut p = Provenance::new("test");
        p.set("seed", 3).input("data", &input).unwrap();
        let rec = dir.path().join(FILE);
        assert!(!p.is_current(&rec, &[out.clone()]));
        p.write(&rec, &[out.clone()]).unwrap();
        assert!(p.is_current(&rec, &[out.clone()]));

        let mut q = Provenance::new("test");
        q.set("seed", 4).input("data", &input).unwrap();
        assert!(!q.is_current(&rec, &[out.clone()]));

        fs::write(&out, "tampered").unwrap();
        assert!(!p.is_current(&rec, &[out.clone()]));
        fs::write(&out, "result").unwrap();
        fs::write(&input, "a\n2\n").unwrap();
        let mut r = Provenance::new("test");
        r.set("seed", 3).input("data", &input).unwrap();
        assert!(!r.is_current(&rec, &[out]));
    }
}
