use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::EdgeTypeRegistry;
use crate::tensor::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"SYHGTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Run configuration, stored verbatim.
    pub config: serde_json::Value,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub vertex_kinds: Vec<String>,
    pub edge_types: EdgeTypeRegistry,
    /// Constituent label table rows, unknown label first.
    pub labels: Vec<String>,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    /// Values in `header.tensors` order.
    pub tensors: Vec<Matrix>,
}

/// Layout: magic, version (u32 LE), header length (u64 LE), JSON header,
/// then every tensor as row-major f64 LE.
pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    if ckpt.header.tensors.len() != ckpt.tensors.len() {
        return Err(Error::Format(
            "header and tensor list lengths differ".into(),
        ));
    }
    for (info, m) in ckpt.header.tensors.iter().zip(&ckpt.tensors) {
        if (info.rows, info.cols) != m.shape() {
            return Err(Error::Format(format!(
                "tensor {} shape disagrees with header",
                info.name
            )));
        }
    }
    let header = serde_json::to_vec(&ckpt.header)?;
    let payload: usize = ckpt.tensors.iter().map(|m| m.len() * 8).sum();
    let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 12 + header.len() + payload);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for m in &ckpt.tensors {
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format(format!(
            "checkpoint truncated while reading {what}"
        )));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn decode_checkpoint(mut bytes: &[u8]) -> Result<Checkpoint> {
    if take(&mut bytes, CHECKPOINT_MAGIC.len(), "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, "version")?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let header_len = u64::from_le_bytes(take(&mut bytes, 8, "header length")?.try_into().unwrap());
    let header_len =
        usize::try_from(header_len).map_err(|_| Error::Format("header length overflows".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(take(&mut bytes, header_len, "header")?)
        .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for info in &header.tensors {
        let n = info
            .rows
            .checked_mul(info.cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format(format!("tensor {} too large", info.name)))?;
        let raw = take(&mut bytes, n, &info.name)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Matrix::from_vec(info.rows, info.cols, data)?);
    }
    if !bytes.is_empty() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last tensor",
            bytes.len()
        )));
    }
    Ok(Checkpoint { header, tensors })
}

/// Writes atomically via a temporary file in the target directory.
pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}
