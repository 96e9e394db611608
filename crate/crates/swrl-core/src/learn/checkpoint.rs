//! Policy checkpoints: little-endian parameter blobs next to a JSON manifest
//! carrying shapes, the config hash, and the seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub algo: String,
    pub config_hash: String,
    pub seed: u64,
    pub nets: Vec<NetEntry>,
}

fn manifest_path(stem: &Path) -> PathBuf {
    stem.with_extension("manifest.json")
}

fn params_path(stem: &Path) -> PathBuf {
    stem.with_extension("params.bin")
}

/// Write the manifest and the concatenated parameter blob.
pub fn save_checkpoint(
    stem: &Path,
    algo: &str,
    config_hash: &str,
    seed: u64,
    nets: &[(&str, &[f64])],
) -> Result<()> {
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        algo: algo.to_string(),
        config_hash: config_hash.to_string(),
        seed,
        nets: nets
            .iter()
            .map(|(name, params)| NetEntry {
                name: name.to_string(),
                len: params.len(),
            })
            .collect(),
    };
    if let Some(parent) = stem.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(
        manifest_path(stem),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    let total: usize = nets.iter().map(|(_, p)| p.len()).sum();
    let mut bytes = Vec::with_capacity(total * 8);
    for (_, params) in nets {
        for v in *params {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(params_path(stem), bytes)?;
    Ok(())
}

/// Read the manifest and split the blob back into per-net vectors.
pub fn load_checkpoint(stem: &Path) -> Result<(CheckpointManifest, Vec<Vec<f64>>)> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&fs::read_to_string(manifest_path(stem))?)?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(Error::ArtifactMismatch(format!(
            "checkpoint version {} unsupported",
            manifest.version
        )));
    }
    let bytes = fs::read(params_path(stem))?;
    let expected: usize = manifest.nets.iter().map(|n| n.len).sum();
    if bytes.len() != expected * 8 {
        return Err(Error::ArtifactMismatch(format!(
            "parameter blob holds {} bytes, manifest expects {}",
            bytes.len(),
            expected * 8
        )));
    }
    let mut nets = Vec::with_capacity(manifest.nets.len());
    let mut off = 0;
    for entry in &manifest.nets {
        let mut params = Vec::with_capacity(entry.len);
        for _ in 0..entry.len {
            params.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
            off += 8;
        }
        nets.push(params);
    }
    Ok((manifest, nets))
}

/// Copy loaded parameters into a freshly built net, verifying the length.
pub fn restore_net(target: &mut Vec<f64>, name: &str, loaded: &[f64]) -> Result<()> {
    if target.len() != loaded.len() {
        return Err(Error::ArtifactMismatch(format!(
            "net `{name}`: checkpoint holds {} parameters, model expects {}",
            loaded.len(),
            target.len()
        )));
    }
    target.copy_from_slice(loaded);
    Ok(())
}
