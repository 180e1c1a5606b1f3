//! Replication-level checkpointing: per-cell sets of completed replication
//! indices and their rejection outcomes, written as versioned JSON so an
//! interrupted sweep resumes to the identical final table.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CellProgress {
    /// Completed replication indices, sorted.
    pub completed: Vec<u32>,
    /// Per method: replication indices that rejected, sorted.
    pub rejects: BTreeMap<String, Vec<u32>>,
    /// Per method: accumulated statistic-computation seconds.
    pub runtime_s: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Hash of the expanded cell keys; a resume against a different
    /// configuration is refused.
    pub config_hash: String,
    pub cells: BTreeMap<String, CellProgress>,
}

impl Checkpoint {
    pub fn new(config_hash: String) -> Self {
        Checkpoint { version: CHECKPOINT_VERSION, config_hash, cells: BTreeMap::new() }
    }

    pub fn load(path: &Path, expected_hash: &str) -> Result<Option<Self>, HarnessError> {
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Runtime(format!("checkpoint read: {e}")))?;
        let cp: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Runtime(format!("checkpoint parse: {e}")))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(HarnessError::Runtime(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                cp.version
            )));
        }
        if cp.config_hash != expected_hash {
            return Err(HarnessError::Runtime(
                "checkpoint belongs to a different configuration".into(),
            ));
        }
        Ok(Some(cp))
    }

    /// Atomic save: write to a sibling temp file, then rename.
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string(self)
            .map_err(|e| HarnessError::Runtime(format!("checkpoint serialize: {e}")))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text)
            .map_err(|e| HarnessError::Runtime(format!("checkpoint write: {e}")))?;
        fs::rename(&tmp, path)
            .map_err(|e| HarnessError::Runtime(format!("checkpoint rename: {e}")))?;
        Ok(())
    }
}

/// FNV-1a over the sorted cell keys; stable across platforms and runs.
pub fn config_hash(cell_keys: &[String]) -> String {
    let mut sorted: Vec<&String> = cell_keys.iter().collect();
    sorted.sort();
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for key in sorted {
        for &b in key.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h ^= 0xFF;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let dir = std::env::temp_dir().join(format!("kboot-cp-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cp.json");
        let hash = config_hash(&["a".into(), "b".into()]);
        let mut cp = Checkpoint::new(hash.clone());
        let mut prog = CellProgress { completed: vec![0, 1, 5], ..Default::default() };
        prog.rejects.insert("GB".into(), vec![1]);
        cp.cells.insert("a".into(), prog);
        cp.save(&path).unwrap();
        let back = Checkpoint::load(&path, &hash).unwrap().unwrap();
        assert_eq!(back.cells["a"].completed, vec![0, 1, 5]);
        assert_eq!(back.cells["a"].rejects["GB"], vec![1]);
        // wrong hash refused
        assert!(Checkpoint::load(&path, "0000000000000000").is_err());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn hash_order_independent() {
        let a = config_hash(&["x".into(), "y".into()]);
        let b = config_hash(&["y".into(), "x".into()]);
        assert_eq!(a, b);
        assert_ne!(a, config_hash(&["x".into()]));
    }
}
