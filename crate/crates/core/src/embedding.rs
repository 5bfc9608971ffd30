//! Token embedding providers: a seeded stub and a binary file loader.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SubwordToken;
use crate::tensor::Matrix;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"SYHGTEMB";
pub const EMBEDDING_VERSION: u32 = 1;
pub const DEFAULT_STUB_DIM: usize = 32;

/// Source of `n × d` token embeddings for an example's subword sequence.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, example_id: &str, subwords: &[SubwordToken]) -> Result<Matrix>;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Row `i` is a unit vector drawn from a generator seeded by
/// `(seed, subword_ids[i], i)`.
pub fn stub_embed(subword_ids: &[usize], dim: usize, seed: u64) -> Matrix {
    let mut m = Matrix::zeros(subword_ids.len(), dim);
    for (pos, &id) in subword_ids.iter().enumerate() {
        let key = splitmix64(splitmix64(splitmix64(seed) ^ id as u64) ^ pos as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let row = m.row_mut(pos);
        loop {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
                break;
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubEmbeddings {
    pub dim: usize,
    pub seed: u64,
}

impl EmbeddingProvider for StubEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _example_id: &str, subwords: &[SubwordToken]) -> Result<Matrix> {
        let ids: Vec<usize> = subwords.iter().map(|s| s.id).collect();
        Ok(stub_embed(&ids, self.dim, self.seed))
    }
}

/// Per-record tokenization stored beside an embedding file. Offsets refer
/// to `question + " " + passage`; special tokens sit at `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub pieces: Vec<String>,
    pub offsets: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    /// `n_tokens × dim`; stored as 32-bit reals.
    pub values: Matrix,
    pub tokens: Option<SidecarEntry>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".offsets.json");
    PathBuf::from(name)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn u32_field(value: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(value)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::Format(format!("{what} {value} exceeds u32")))
}

pub fn encode_embeddings(dim: usize, records: &[EmbeddingRecord]) -> Result<Vec<u8>> {
    if dim == 0 {
        return Err(Error::Format("embedding dimension must be positive".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&u32_field(dim, "dimension")?);
    out.extend_from_slice(&u32_field(records.len(), "record count")?);
    for r in records {
        if r.values.cols() != dim {
            return Err(Error::Format(format!(
                "record {} has width {}, expected {dim}",
                r.id,
                r.values.cols()
            )));
        }
        out.extend_from_slice(&u32_field(r.id.len(), "id length")?);
        out.extend_from_slice(r.id.as_bytes());
        out.extend_from_slice(&u32_field(r.values.rows(), "token count")?);
        for &v in r.values.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes the binary file and, if any record carries tokens, the sidecar.
/// Both are replaced atomically.
pub fn write_embeddings(path: &Path, dim: usize, records: &[EmbeddingRecord]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.id.as_str())) {
        return Err(Error::Format(format!("duplicate record id {:?}", dup.id)));
    }
    let bytes = encode_embeddings(dim, records)?;
    let sidecar: BTreeMap<&str, &SidecarEntry> = records
        .iter()
        .filter_map(|r| r.tokens.as_ref().map(|t| (r.id.as_str(), t)))
        .collect();
    atomic_write(path, &bytes)?;
    if !sidecar.is_empty() {
        atomic_write(&sidecar_path(path), &serde_json::to_vec(&sidecar)?)?;
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "embedding file truncated at byte {} reading {what}",
                    self.at
                ))
            })?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<(usize, Vec<(String, Matrix)>)> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8, "magic")? != EMBEDDING_MAGIC {
        return Err(Error::Format("not an embedding file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != EMBEDDING_VERSION as usize {
        return Err(Error::Format(format!(
            "unsupported embedding file version {version}"
        )));
    }
    let dim = r.u32("dimension")?;
    if dim == 0 {
        return Err(Error::Format("embedding dimension is zero".into()));
    }
    let count = r.u32("record count")?;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id_len = r.u32("id length")?;
        let id = std::str::from_utf8(r.take(id_len, "id")?)
            .map_err(|_| Error::Format("record id is not UTF-8".into()))?
            .to_string();
        let n = r.u32("token count")?;
        let len = n
            .checked_mul(dim)
            .and_then(|x| x.checked_mul(4))
            .ok_or_else(|| Error::Format(format!("record {id} too large")))?;
        let data = r
            .take(len, "values")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        records.push((id, Matrix::from_vec(n, dim, data)?));
    }
    if r.at != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last record",
            bytes.len() - r.at
        )));
    }
    Ok((dim, records))
}

/// Embeddings keyed by example id, loaded fully into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct FileEmbeddings {
    dim: usize,
    records: HashMap<String, Matrix>,
    order: Vec<String>,
    sidecar: HashMap<String, SidecarEntry>,
}

impl FileEmbeddings {
    pub fn from_parts(
        dim: usize,
        records: Vec<(String, Matrix)>,
        sidecar: HashMap<String, SidecarEntry>,
    ) -> Result<Self> {
        let mut map = HashMap::with_capacity(records.len());
        let mut order = Vec::with_capacity(records.len());
        for (id, m) in records {
            if let Some(entry) = sidecar.get(&id) {
                if entry.pieces.len() != m.rows() || entry.offsets.len() != m.rows() {
                    return Err(Error::Consistency(format!(
                        "record {id:?}: {} tokens but sidecar lists {} pieces and {} offsets",
                        m.rows(),
                        entry.pieces.len(),
                        entry.offsets.len()
                    )));
                }
            }
            order.push(id.clone());
            if map.insert(id.clone(), m).is_some() {
                return Err(Error::Format(format!("duplicate record id {id:?}")));
            }
        }
        if let Some(extra) = sidecar.keys().find(|k| !map.contains_key(*k)) {
            return Err(Error::Consistency(format!(
                "sidecar entry {extra:?} has no record"
            )));
        }
        Ok(FileEmbeddings {
            dim,
            records: map,
            order,
            sidecar,
        })
    }

    pub fn get(&self, id: &str) -> Option<&Matrix> {
        self.records.get(id)
    }

    pub fn tokens(&self, id: &str) -> Option<&SidecarEntry> {
        self.sidecar.get(id)
    }

    /// Record ids in file order.
    pub fn ids(&self) -> &[String] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

impl EmbeddingProvider for FileEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, example_id: &str, subwords: &[SubwordToken]) -> Result<Matrix> {
        let m = self.get(example_id).ok_or_else(|| {
            Error::Consistency(format!("no embeddings for example {example_id:?}"))
        })?;
        if m.rows() != subwords.len() {
            return Err(Error::Consistency(format!(
                "example {example_id:?}: {} embedding rows for {} subwords",
                m.rows(),
                subwords.len()
            )));
        }
        Ok(m.clone())
    }
}

/// Loads the binary file and its sidecar when present.
pub fn load_embeddings(path: &Path) -> Result<FileEmbeddings> {
    let (dim, records) = decode_embeddings(&std::fs::read(path)?)?;
    let side = sidecar_path(path);
    let sidecar = match std::fs::read(&side) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map_err(|e| Error::Format(format!("{}: {e}", side.display())))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => HashMap::new(),
        Err(e) => return Err(e.into()),
    };
    FileEmbeddings::from_parts(dim, records, sidecar)
}
