//! Checkpoint and episode files: a JSON manifest listing named tensors with
//! shapes plus a binary blob of little-endian f64 values in manifest order.
//! A checkpoint is a `<stem>.json` / `<stem>.bin` pair.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{NamedTensors, Tensor};
use crate::error::{GradError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

fn io_err(path: &Path, source: std::io::Error) -> GradError {
    GradError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn ckpt_err(path: &Path, detail: impl Into<String>) -> GradError {
    GradError::Checkpoint {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

/// Write named tensors as `<stem>.json` + `<stem>.bin`.
pub fn save_tensors(stem: &Path, tensors: &[(String, Tensor)]) -> Result<()> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json_path = stem.with_extension("json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| ckpt_err(&json_path, e.to_string()))?;
    fs::write(&json_path, json).map_err(|e| io_err(&json_path, e))?;

    let mut blob = Vec::with_capacity(tensors.iter().map(|(_, t)| t.len() * 8).sum());
    for (_, t) in tensors {
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let bin_path = stem.with_extension("bin");
    fs::write(&bin_path, blob).map_err(|e| io_err(&bin_path, e))?;
    Ok(())
}

/// Read back a `<stem>.json` + `<stem>.bin` pair.
pub fn load_tensors(stem: &Path) -> Result<Vec<(String, Tensor)>> {
    let json_path = stem.with_extension("json");
    let json = fs::read_to_string(&json_path).map_err(|e| io_err(&json_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&json).map_err(|e| ckpt_err(&json_path, e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ckpt_err(
            &json_path,
            format!(
                "unsupported format version {} (expected {})",
                manifest.format_version, FORMAT_VERSION
            ),
        ));
    }
    let bin_path = stem.with_extension("bin");
    let blob = fs::read(&bin_path).map_err(|e| io_err(&bin_path, e))?;
    let expected: usize = manifest
        .tensors
        .iter()
        .map(|e| e.shape.iter().product::<usize>() * 8)
        .sum();
    if blob.len() != expected {
        return Err(ckpt_err(
            &bin_path,
            format!("blob is {} bytes, manifest implies {}", blob.len(), expected),
        ));
    }
    let mut out = Vec::with_capacity(manifest.tensors.len());
    let mut offset = 0;
    for entry in manifest.tensors {
        let n: usize = entry.shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let bytes: [u8; 8] = blob[offset..offset + 8].try_into().unwrap();
            data.push(f64::from_le_bytes(bytes));
            offset += 8;
        }
        let t = Tensor::new(entry.shape, data).map_err(|e| ckpt_err(&bin_path, e.to_string()))?;
        out.push((entry.name, t));
    }
    Ok(out)
}

/// Save a parameter struct.
pub fn save_params(stem: &Path, params: &dyn NamedTensors) -> Result<()> {
    let mut tensors = Vec::new();
    params.visit(&mut |name, t| tensors.push((name.to_string(), t.clone())));
    save_tensors(stem, &tensors)
}

/// Load a checkpoint into an existing parameter struct. Every parameter
/// must be present with a matching shape.
pub fn load_params(stem: &Path, params: &mut dyn NamedTensors) -> Result<()> {
    let loaded = load_tensors(stem)?;
    let map: std::collections::BTreeMap<&str, &Tensor> =
        loaded.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let mut missing = Vec::new();
    let mut mismatched = Vec::new();
    params.visit_mut(&mut |name, t| match map.get(name) {
        Some(src) if src.shape() == t.shape() => *t = (*src).clone(),
        Some(src) => mismatched.push(format!(
            "{name}: checkpoint {:?} vs expected {:?}",
            src.shape(),
            t.shape()
        )),
        None => missing.push(name.to_string()),
    });
    if !missing.is_empty() || !mismatched.is_empty() {
        return Err(ckpt_err(
            stem,
            format!("missing: {missing:?}; shape mismatches: {mismatched:?}"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ck");
        let tensors = vec![
            ("a".to_string(), Tensor::matrix(2, 2, vec![1.5, -2.25, 1e-300, 3.7]).unwrap()),
            ("b".to_string(), Tensor::vector(vec![0.1]).unwrap()),
        ];
        save_tensors(&stem, &tensors).unwrap();
        let back = load_tensors(&stem).unwrap();
        assert_eq!(back, tensors);
    }

    #[test]
    fn rejects_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ck");
        save_tensors(&stem, &[("a".into(), Tensor::scalar(1.0))]).unwrap();
        let json_path = stem.with_extension("json");
        let text = std::fs::read_to_string(&json_path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        std::fs::write(&json_path, text).unwrap();
        assert!(load_tensors(&stem).is_err());
    }

    #[test]
    fn rejects_truncated_blob() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ck");
        save_tensors(&stem, &[("a".into(), Tensor::vector(vec![1.0, 2.0]).unwrap())]).unwrap();
        let bin_path = stem.with_extension("bin");
        let blob = std::fs::read(&bin_path).unwrap();
        std::fs::write(&bin_path, &blob[..8]).unwrap();
        assert!(load_tensors(&stem).is_err());
    }
}
