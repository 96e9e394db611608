//! Binary transition datasets: magic `SWRL1`, a JSON meta header,
//! length-prefixed records of little-endian 64-bit floats, and an FNV-64
//! checksum footer for cross-run diffing.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::fnv1a64;
use crate::env::TerminationCause;
use crate::error::{Error, Result};

use super::replay::Transition;

pub const DATASET_MAGIC: &[u8; 5] = b"SWRL1";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config_hash: String,
    pub seed: u64,
    /// Flattened window length in elements.
    pub window_elems: usize,
    pub redundant_dim: usize,
    pub count: usize,
}

fn cause_code(cause: Option<TerminationCause>) -> f64 {
    match cause {
        None => 0.0,
        Some(TerminationCause::JointLimit) => 1.0,
        Some(TerminationCause::GraspLoss) => 2.0,
        Some(TerminationCause::Timeout) => 3.0,
    }
}

fn cause_from_code(code: f64) -> Result<Option<TerminationCause>> {
    match code as i64 {
        0 => Ok(None),
        1 => Ok(Some(TerminationCause::JointLimit)),
        2 => Ok(Some(TerminationCause::GraspLoss)),
        3 => Ok(Some(TerminationCause::Timeout)),
        other => Err(Error::ArtifactMismatch(format!(
            "unknown termination code {other}"
        ))),
    }
}

fn record_payload(t: &Transition) -> Vec<u8> {
    let mut values: Vec<f64> = Vec::new();
    values.extend(t.window.iter().map(|v| *v as f64));
    values.extend(t.next_window.iter().map(|v| *v as f64));
    values.push(t.force_idx as f64);
    values.extend(t.accel_r.iter());
    values.extend(t.prev_accel_r.iter());
    values.push(t.r_k);
    values.push(t.r_r);
    values.push(if t.done { 1.0 } else { 0.0 });
    values.push(cause_code(t.cause));
    values.push(t.velocity_estimate);
    values.push(t.contact_forces.len() as f64);
    values.extend(t.contact_forces.iter());
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn parse_record(bytes: &[u8], meta: &DatasetMeta) -> Result<Transition> {
    if bytes.len() % 8 != 0 {
        return Err(Error::ArtifactMismatch("record not 8-byte aligned".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let w = meta.window_elems;
    let n = meta.redundant_dim;
    let fixed = 2 * w + 1 + 2 * n + 6;
    if values.len() < fixed {
        return Err(Error::ArtifactMismatch(format!(
            "record holds {} values, need at least {fixed}",
            values.len()
        )));
    }
    let mut at = 0;
    let mut take = |count: usize| -> &[f64] {
        let s = &values[at..at + count];
        at += count;
        s
    };
    let window: Vec<f32> = take(w).iter().map(|v| *v as f32).collect();
    let next_window: Vec<f32> = take(w).iter().map(|v| *v as f32).collect();
    let force_idx = take(1)[0] as u8;
    let accel_r = take(n).to_vec();
    let prev_accel_r = take(n).to_vec();
    let r_k = take(1)[0];
    let r_r = take(1)[0];
    let done = take(1)[0] != 0.0;
    let cause = cause_from_code(take(1)[0])?;
    let velocity_estimate = take(1)[0];
    let n_contacts = take(1)[0] as usize;
    if values.len() != fixed + n_contacts {
        return Err(Error::ArtifactMismatch(format!(
            "record holds {} values, expected {}",
            values.len(),
            fixed + n_contacts
        )));
    }
    let contact_forces = take(n_contacts).to_vec();
    Ok(Transition {
        window: window.into_boxed_slice(),
        next_window: next_window.into_boxed_slice(),
        force_idx,
        accel_r,
        prev_accel_r,
        r_k,
        r_r,
        done,
        cause,
        velocity_estimate,
        contact_forces,
    })
}

/// Serialize transitions; returns the payload checksum written to the footer.
pub fn write_dataset(path: &Path, meta: &DatasetMeta, transitions: &[Transition]) -> Result<u64> {
    if meta.count != transitions.len() {
        return Err(Error::Usage(format!(
            "meta.count {} does not match {} transitions",
            meta.count,
            transitions.len()
        )));
    }
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    let meta_bytes = serde_json::to_vec(meta)?;
    out.extend_from_slice(&(meta_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_bytes);
    let mut payload_hash_input = Vec::new();
    for t in transitions {
        let payload = record_payload(t);
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        payload_hash_input.extend_from_slice(&payload);
    }
    let checksum = fnv1a64(&payload_hash_input);
    out.extend_from_slice(&checksum.to_le_bytes());
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, out)?;
    Ok(checksum)
}

/// Deserialize a dataset, verifying magic, version, and checksum.
pub fn read_dataset(path: &Path) -> Result<(DatasetMeta, Vec<Transition>, u64)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 5 + 4 + 4 + 8 || &bytes[..5] != DATASET_MAGIC {
        return Err(Error::ArtifactMismatch(format!(
            "{} is not a transition dataset",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(Error::ArtifactMismatch(format!(
            "dataset version {version} unsupported"
        )));
    }
    let meta_len = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let meta: DatasetMeta = serde_json::from_slice(&bytes[13..13 + meta_len])?;
    let mut at = 13 + meta_len;
    let mut payload_hash_input = Vec::new();
    let mut transitions = Vec::with_capacity(meta.count);
    for _ in 0..meta.count {
        let len = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        at += 4;
        let payload = &bytes[at..at + len];
        at += len;
        payload_hash_input.extend_from_slice(payload);
        transitions.push(parse_record(payload, &meta)?);
    }
    let stored = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let computed = fnv1a64(&payload_hash_input);
    if stored != computed {
        return Err(Error::ArtifactMismatch(format!(
            "dataset checksum {computed:016x} does not match stored {stored:016x}"
        )));
    }
    Ok((meta, transitions, stored))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_transition(i: usize) -> Transition {
        Transition {
            window: vec![i as f32, 0.5, -1.0].into_boxed_slice(),
            next_window: vec![i as f32 + 1.0, 0.25, 2.0].into_boxed_slice(),
            force_idx: (i % 4) as u8,
            accel_r: vec![0.1 * i as f64],
            prev_accel_r: vec![0.0],
            r_k: (i % 2) as f64,
            r_r: 1.0 - 0.01 * i as f64,
            done: i == 9,
            cause: if i == 9 {
                Some(TerminationCause::Timeout)
            } else {
                None
            },
            velocity_estimate: 0.7,
            contact_forces: if i % 3 == 0 { vec![-2.0, -0.5] } else { vec![] },
        }
    }

    fn temp_path(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("swrl_ds_{}_{name}", std::process::id()))
    }

    #[test]
    fn roundtrip_count_and_checksum() {
        let transitions: Vec<Transition> = (0..10).map(sample_transition).collect();
        let meta = DatasetMeta {
            config_hash: "cafe".into(),
            seed: 3,
            window_elems: 3,
            redundant_dim: 1,
            count: transitions.len(),
        };
        let path = temp_path("roundtrip.swrl1");
        let checksum = write_dataset(&path, &meta, &transitions).unwrap();
        let (meta2, loaded, stored) = read_dataset(&path).unwrap();
        assert_eq!(meta2.count, 10);
        assert_eq!(stored, checksum);
        assert_eq!(loaded.len(), transitions.len());
        for (a, b) in loaded.iter().zip(transitions.iter()) {
            assert_eq!(a, b);
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn empty_dataset_valid_header() {
        let meta = DatasetMeta {
            config_hash: "00".into(),
            seed: 0,
            window_elems: 3,
            redundant_dim: 1,
            count: 0,
        };
        let path = temp_path("empty.swrl1");
        write_dataset(&path, &meta, &[]).unwrap();
        let (meta2, loaded, _) = read_dataset(&path).unwrap();
        assert_eq!(meta2.count, 0);
        assert!(loaded.is_empty());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn corrupted_magic_rejected() {
        let path = temp_path("bad.swrl1");
        std::fs::write(&path, b"NOTSWRL000000000000000").unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(Error::ArtifactMismatch(_))
        ));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn tampered_payload_fails_checksum() {
        let transitions: Vec<Transition> = (0..5).map(sample_transition).collect();
        let meta = DatasetMeta {
            config_hash: "cafe".into(),
            seed: 3,
            window_elems: 3,
            redundant_dim: 1,
            count: transitions.len(),
        };
        let path = temp_path("tamper.swrl1");
        write_dataset(&path, &meta, &transitions).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        assert!(read_dataset(&path).is_err());
        std::fs::remove_file(&path).ok();
    }
}
