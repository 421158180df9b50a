use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

/// A file read whole, with its digest kept for provenance.
pub struct Input {
    pub role: &'static str,
    pub path: PathBuf,
    pub text: String,
    pub sha256: String,
}

impl Input {
    pub fn read(role: &'static str, path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {} file {}", role, path.display()))?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
        Ok(Self {
            role,
            path: path.to_path_buf(),
            text,
            sha256,
        })
    }
}

/// `{"seed": .., "inputs": [{role, path, sha256}, ..]}` entries for output documents.
pub fn provenance(seed: u64, inputs: &[&Input]) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("seed".into(), json!(seed));
    m.insert(
        "inputs".into(),
        Value::Array(
            inputs
                .iter()
                .map(|i| json!({"role": i.role, "path": i.path.display().to_string(), "sha256": i.sha256}))
                .collect(),
        ),
    );
    m
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `4272048` -> `4,272,048`
pub fn group_digits(n: u128) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digit_grouping() {
        assert_eq!(group_digits(0), "0");
        assert_eq!(group_digits(999), "999");
        assert_eq!(group_digits(1000), "1,000");
        assert_eq!(group_digits(4_272_048), "4,272,048");
        assert_eq!(group_digits(5_379_616), "5,379,616");
    }
}
