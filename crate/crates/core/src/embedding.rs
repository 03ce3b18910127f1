//! The embedder contract and the deterministic lexical reference embedder.
//!
//! The reference embedder is a hashed bag-of-words: lowercase, split on
//! whitespace, hash each token into one of `dim` buckets, accumulate term
//! frequency, then L2-normalize. It is bit-deterministic across runs and
//! platforms (fixed hash, fixed summation order), which makes every
//! pipeline equivalence check exact. Neural embedders integrate by writing
//! the same embedding file format; they are never loaded in-process.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Passage;
use crate::error::{Error, Result};
use crate::hash::hash64;

/// Magic bytes at the start of every embedding file.
pub const EMBEDDING_MAGIC: [u8; 4] = *b"TRVE";
/// Current embedding file format version.
pub const EMBEDDING_FORMAT_VERSION: u32 = 1;

/// Name of the shipped reference embedder.
pub const REFERENCE_EMBEDDER: &str = "lexical-bow-v1";
/// Default embedding dimensionality.
pub const DEFAULT_DIM: usize = 256;
/// Default retriever parameter count used for FLOPs accounting. The
/// reference embedder has no parameters; reports assume a 177M-parameter
/// dense retriever unless overridden.
pub const DEFAULT_RETRIEVER_PARAMS: u64 = 177_000_000;

/// A dense vector of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt()
    }
}

/// Identifies an embedder and carries what FLOPs accounting needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub name: String,
    pub dim: usize,
    /// Retriever parameter count, for compute accounting only.
    pub retriever_params: u64,
}

impl EmbedderSpec {
    pub fn new(name: impl Into<String>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config {
                field: "dim".into(),
                msg: "embedding dimension must be >= 1".into(),
            });
        }
        Ok(Self {
            name: name.into(),
            dim,
            retriever_params: DEFAULT_RETRIEVER_PARAMS,
        })
    }
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        Self {
            name: REFERENCE_EMBEDDER.into(),
            dim: DEFAULT_DIM,
            retriever_params: DEFAULT_RETRIEVER_PARAMS,
        }
    }
}

/// Embed one text with the reference embedder.
///
/// Empty (or whitespace-only) text maps to the zero vector; any other text
/// maps to a unit-norm vector. Bucket accumulation and the normalization
/// sum both run in ascending bucket order so the result is bit-identical
/// everywhere.
pub fn embed_text(text: &str, spec: &EmbedderSpec) -> EmbeddingVector {
    debug_assert!(spec.dim >= 1);
    let mut values = vec![0f32; spec.dim];
    for token in text.to_lowercase().split_whitespace() {
        let bucket = (hash64(token.as_bytes()) % spec.dim as u64) as usize;
        values[bucket] += 1.0;
    }
    let mut norm_sq = 0f64;
    for &x in &values {
        norm_sq += f64::from(x) * f64::from(x);
    }
    if norm_sq > 0.0 {
        let norm = norm_sq.sqrt();
        for x in &mut values {
            *x = (f64::from(*x) / norm) as f32;
        }
    }
    EmbeddingVector::new(values)
}

/// Embeddings for one shard: an id table plus a row-major matrix, row `i`
/// belonging to `ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardPayload {
    pub domain: String,
    pub shard: u32,
    pub dim: usize,
    pub ids: Vec<String>,
    pub data: Vec<f32>,
}

impl ShardPayload {
    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Embed all passages of one shard. Passages must share a (domain, shard);
/// row order follows input order.
pub fn embed_shard(passages: &[Passage], spec: &EmbedderSpec) -> ShardPayload {
    let (domain, shard) = passages
        .first()
        .map(|p| (p.domain.clone(), p.shard))
        .unwrap_or_default();
    debug_assert!(
        passages.iter().all(|p| p.domain == domain && p.shard == shard),
        "embed_shard input spans multiple shards"
    );
    let mut data = Vec::with_capacity(passages.len() * spec.dim);
    let mut ids = Vec::with_capacity(passages.len());
    for passage in passages {
        data.extend_from_slice(embed_text(&passage.text, spec).values());
        ids.push(passage.passage_id.clone());
    }
    ShardPayload { domain, shard, dim: spec.dim, ids, data }
}

/// Write a payload in the embedding file format:
/// magic `TRVE`, version (u32 LE), dim (u32 LE), rows (u64 LE), the id
/// table (u32 LE byte length + UTF-8 bytes per id), then the row-major
/// matrix as IEEE-754 f32 little-endian. Bit-exact across platforms.
pub fn write_embedding_file<W: Write>(mut w: W, payload: &ShardPayload) -> Result<()> {
    w.write_all(&EMBEDDING_MAGIC)?;
    w.write_all(&EMBEDDING_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(payload.dim as u32).to_le_bytes())?;
    w.write_all(&(payload.rows() as u64).to_le_bytes())?;
    for id in &payload.ids {
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
    }
    for &x in &payload.data {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Parse an embedding file. The domain/shard fields are not stored in the
/// payload; they come from the sidecar manifest and default to empty here.
pub fn read_embedding_file<R: Read>(mut r: R, path: &str) -> Result<ShardPayload> {
    let corrupt = |msg: &str| Error::Corrupt { path: path.to_string(), msg: msg.to_string() };

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path, "magic")?;
    if magic != EMBEDDING_MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let version = read_u32(&mut r, path, "version")?;
    if version != EMBEDDING_FORMAT_VERSION {
        return Err(corrupt(&format!("unsupported format version {version}")));
    }
    let dim = read_u32(&mut r, path, "dim")? as usize;
    let rows = read_u64(&mut r, path, "rows")? as usize;

    let mut ids = Vec::with_capacity(rows);
    for i in 0..rows {
        let len = read_u32(&mut r, path, "id length")? as usize;
        let mut buf = vec![0u8; len];
        read_exact(&mut r, &mut buf, path, "id bytes")?;
        let id = String::from_utf8(buf)
            .map_err(|_| corrupt(&format!("id {i} is not valid UTF-8")))?;
        ids.push(id);
    }

    let mut data = Vec::with_capacity(rows * dim);
    let mut buf = [0u8; 4];
    for _ in 0..rows * dim {
        read_exact(&mut r, &mut buf, path, "matrix data")?;
        data.push(f32::from_le_bytes(buf));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(corrupt("trailing bytes after matrix"));
    }
    Ok(ShardPayload { domain: String::new(), shard: 0, dim, ids, data })
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], path: &str, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Corrupt {
        path: path.to_string(),
        msg: format!("truncated while reading {what}"),
    })
}

fn read_u32<R: Read>(r: &mut R, path: &str, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, path, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R, path: &str, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, path, what)?;
    Ok(u64::from_le_bytes(buf))
}
