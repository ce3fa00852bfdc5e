use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DiffError, ModelParams};

/// Named tensors plus a hash of the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub params: ModelParams,
}

/// Hex SHA-256 of a value's JSON encoding.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), DiffError> {
    std::fs::write(path, serde_json::to_vec(checkpoint)?)?;
    Ok(())
}

/// Load a checkpoint; when `expected_hash` is given it must match.
pub fn load_checkpoint(path: &Path, expected_hash: Option<&str>) -> Result<Checkpoint, DiffError> {
    let ck: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
    if let Some(h) = expected_hash {
        if h != ck.config_hash {
            return Err(DiffError::Checkpoint(format!("config hash {} does not match {h}", ck.config_hash)));
        }
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffkit::{Activation, Dense, Gru};
    use crate::seed;

    #[test]
    fn save_load_is_exact() {
        let mut rng = seed::rng(17);
        let mut p = ModelParams::new();
        Dense::new(&mut p, "d", 5, 3, Activation::Tanh, &mut rng);
        Gru::new(&mut p, "g", 3, 4, &mut rng);
        let hash = config_hash(&("model", 5, 3));
        let ck = Checkpoint { config_hash: hash.clone(), params: p };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path, Some(&hash)).unwrap();
        assert_eq!(back, ck);
        assert!(load_checkpoint(&path, Some("nope")).is_err());
        assert_eq!(hash.len(), 64);
    }
}
