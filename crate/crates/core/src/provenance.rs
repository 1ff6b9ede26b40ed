//! Seed and configuration fingerprint embedded in every persisted artifact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Hex SHA-256 of the canonical JSON encoding of the run configuration.
    pub config_hash: String,
}

impl Provenance {
    pub fn new<C: Serialize>(seed: u64, config: &C) -> Self {
        Self {
            seed,
            config_hash: config_hash(config),
        }
    }
}

/// Struct fields serialize in declaration order and maps used in configs are
/// `BTreeMap`s, so the JSON text is canonical for a given value.
pub fn config_hash<C: Serialize>(config: &C) -> String {
    let text = serde_json::to_string(config).expect("configuration serializes to JSON");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&("voronoi", 740));
        assert_eq!(a, config_hash(&("voronoi", 740)));
        assert_ne!(a, config_hash(&("voronoi", 741)));
        assert_eq!(a.len(), 64);
    }
}
