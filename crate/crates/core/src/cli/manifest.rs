use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Reproducibility record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Value,
    /// Input path as given on the command line → SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
    /// Output files relative to the output directory, sorted.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: Value, seed: u64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config,
            inputs: BTreeMap::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn add_output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut sorted = self.clone();
        sorted.outputs.sort();
        sorted.outputs.dedup();
        // serde_json::Value maps are BTreeMaps, so keys come out sorted.
        let value = serde_json::to_value(&sorted)?;
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        let path = dir.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
