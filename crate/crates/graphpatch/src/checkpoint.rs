//! GPCK checkpoint container: magic "GPCK", u32 LE manifest length, a JSON
//! manifest {"model_kind", "tensors": [{name, rows, cols, byte_offset}]},
//! then a raw little-endian f32 blob. Offsets are relative to blob start.
//! Round-trips are bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::tensor::Matrix;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"GPCK";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: u32,
    pub cols: u32,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub model_kind: String,
    pub tensors: Vec<TensorEntry>,
}

/// Writes named tensors in order. Blob layout follows the given order with
/// no padding.
pub fn write_checkpoint(path: &Path, model_kind: &str, tensors: &[(&str, &Matrix)]) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, m) in tensors {
        entries.push(TensorEntry {
            name: (*name).to_string(),
            rows: m.rows() as u32,
            cols: m.cols() as u32,
            byte_offset: offset,
        });
        offset += (m.data().len() * 4) as u64;
    }
    let manifest = Manifest {
        model_kind: model_kind.to_string(),
        tensors: entries,
    };
    let manifest_json = serde_json::to_vec(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    f.write_all(MAGIC).map_err(io)?;
    f.write_all(&(manifest_json.len() as u32).to_le_bytes()).map_err(io)?;
    f.write_all(&manifest_json).map_err(io)?;
    for (_, m) in tensors {
        for &v in m.data() {
            f.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    f.flush().map_err(io)
}

/// Reads a checkpoint back as (manifest, tensors in manifest order).
pub fn read_checkpoint(path: &Path) -> Result<(Manifest, Vec<Matrix>)> {
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufReader::new(fs::File::open(path).map_err(io)?);
    let mut head = [0u8; 8];
    f.read_exact(&mut head)
        .map_err(|_| Error::Format(format!("{}: checkpoint truncated", path.display())))?;
    if &head[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected \"GPCK\"",
            path.display(),
            &head[0..4]
        )));
    }
    let manifest_len = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let mut manifest_json = vec![0u8; manifest_len];
    f.read_exact(&mut manifest_json)
        .map_err(|_| Error::Format(format!("{}: checkpoint truncated", path.display())))?;
    let manifest: Manifest = serde_json::from_slice(&manifest_json)
        .map_err(|e| Error::Format(format!("{}: bad manifest: {e}", path.display())))?;
    let mut blob = Vec::new();
    f.read_to_end(&mut blob).map_err(io)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let count = entry.rows as usize * entry.cols as usize;
        let start = entry.byte_offset as usize;
        let end = start + count * 4;
        if end > blob.len() {
            return Err(Error::Format(format!(
                "{}: checkpoint truncated: tensor {:?} needs bytes {start}..{end} but blob has {}",
                path.display(),
                entry.name,
                blob.len()
            )));
        }
        let data = blob[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Matrix::from_vec(entry.rows as usize, entry.cols as usize, data));
    }
    let declared: usize = manifest
        .tensors
        .iter()
        .map(|e| e.rows as usize * e.cols as usize * 4)
        .sum();
    if declared != blob.len() {
        return Err(Error::Format(format!(
            "{}: manifest declares {declared} blob bytes but file has {}",
            path.display(),
            blob.len()
        )));
    }
    Ok((manifest, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn sample() -> Vec<(String, Matrix)> {
        vec![
            ("w1".to_string(), Matrix::from_vec(2, 3, vec![1.0, -2.5, 0.0, f32::EPSILON, 100.0, -0.0])),
            ("b1".to_string(), Matrix::from_vec(1, 3, vec![0.5, 0.25, -0.125])),
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("model.gpck");
        let tensors = sample();
        let refs: Vec<(&str, &Matrix)> = tensors.iter().map(|(n, m)| (n.as_str(), m)).collect();
        write_checkpoint(&path, "gcn", &refs).unwrap();
        let (manifest, back) = read_checkpoint(&path).unwrap();
        assert_eq!(manifest.model_kind, "gcn");
        assert_eq!(manifest.tensors.len(), 2);
        assert_eq!(manifest.tensors[0].name, "w1");
        for ((_, orig), loaded) in tensors.iter().zip(&back) {
            let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(orig), bits(loaded));
        }
    }

    #[test]
    fn truncated_file_is_reported() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("model.gpck");
        let tensors = sample();
        let refs: Vec<(&str, &Matrix)> = tensors.iter().map(|(n, m)| (n.as_str(), m)).collect();
        write_checkpoint(&path, "gcn", &refs).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("checkpoint truncated"), "unexpected: {err}");
    }

    #[test]
    fn bad_magic_is_reported() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("model.gpck");
        fs::write(&path, b"XXXX\x02\x00\x00\x00{}").unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "unexpected: {err}");
    }

    #[test]
    fn manifest_blob_size_disagreement_is_reported() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("model.gpck");
        let tensors = sample();
        let refs: Vec<(&str, &Matrix)> = tensors.iter().map(|(n, m)| (n.as_str(), m)).collect();
        write_checkpoint(&path, "gcn", &refs).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.extend_from_slice(&[0u8; 8]);
        fs::write(&path, &bytes).unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("declares"), "unexpected: {err}");
    }
}
