use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub workers: usize,
    pub versions: BTreeMap<String, String>,
    /// Input path (as written in the config) → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name → sha256.
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_s: f64,
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("exciton-core".to_string(), exciton::VERSION.to_string()),
        ("exciton-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ])
}
