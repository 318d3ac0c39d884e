use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ebn::error::{Error, Result};
use ebn::model::CompiledModel;

/// What a run consumed and produced. Two runs with equal manifests (apart
/// from `elapsed_seconds`) write byte-identical outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub model: String,
    pub model_hash: String,
    /// Distinct interval schemes of the network, hashed and sorted.
    pub scheme_hashes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tool_version: String,
    pub elapsed_seconds: f64,
}

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, model: &CompiledModel, evidence: Option<&str>, seed: Option<u64>, elapsed_seconds: f64) -> Self {
        let mut scheme_hashes: Vec<String> = model
            .network
            .nodes()
            .iter()
            .filter_map(|n| n.scheme.as_ref())
            .map(|s| sha256(serde_json::to_string(s).expect("scheme serializes").as_bytes()))
            .collect();
        scheme_hashes.sort();
        scheme_hashes.dedup();
        Self {
            command: command.to_string(),
            model: model.model.clone(),
            model_hash: model.model_hash.clone(),
            scheme_hashes,
            evidence_hash: evidence.map(|e| sha256(e.as_bytes())),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            elapsed_seconds,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}
