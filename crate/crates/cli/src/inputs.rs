use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};
use trajpace_core::io::tree_from_json;
use trajpace_core::Tree;

/// Reads input files and remembers a SHA-256 digest of each.
#[derive(Default)]
pub struct Inputs {
    pub digests: BTreeMap<String, String>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> anyhow::Result<String> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.digests
            .insert(path.display().to_string(), hex::encode(Sha256::digest(text.as_bytes())));
        Ok(text)
    }

    pub fn json<T: DeserializeOwned>(&mut self, path: &Path) -> anyhow::Result<T> {
        let text = self.read(path)?;
        serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
    }

    pub fn tree(&mut self, path: &Path) -> anyhow::Result<Tree> {
        let text = self.read(path)?;
        tree_from_json(&text).with_context(|| format!("invalid tree in {}", path.display()))
    }
}
