//! Per-shard flat inner-product index: exhaustive exact search, no
//! approximation, no quantization.
//!
//! Scores accumulate in f64 over the f32 entries, strictly left to right,
//! so a passage's score is identical no matter which shard holds it.
//! Results are ordered by the total order (score descending, passage id
//! ascending), which makes retrieval deterministic even for duplicate
//! vectors and makes shard merging lossless.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{read_embedding_file, write_embedding_file, EmbeddingVector, ShardPayload};
use crate::error::{Error, Result};
use crate::hash::hash64;

/// A retrieved passage with its inner-product score and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    #[serde(rename = "pid")]
    pub passage_id: String,
    pub score: f64,
    pub domain: String,
    pub shard: u32,
}

/// The retrieval total order: score descending, passage id ascending.
/// Total on finite scores, so equal-score results are still deterministic.
pub fn rank_cmp(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.passage_id.cmp(&b.passage_id))
}

/// Immutable flat index over one shard's embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardIndex {
    domain: String,
    shard: u32,
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
}

impl ShardIndex {
    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn shard(&self) -> u32 {
        self.shard
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_payload(&self) -> ShardPayload {
        ShardPayload {
            domain: self.domain.clone(),
            shard: self.shard,
            dim: self.dim,
            ids: self.ids.clone(),
            data: self.data.clone(),
        }
    }

    /// Hash of the index content (ids and vector bits), used to address
    /// retrieval caches so re-embedding invalidates stale entries.
    pub fn content_fingerprint(&self) -> u64 {
        let mut h = crate::hash::Hasher64::new();
        h.update(self.domain.as_bytes());
        h.update(&self.shard.to_le_bytes());
        h.update(&(self.dim as u64).to_le_bytes());
        h.update(&(self.rows() as u64).to_le_bytes());
        for id in &self.ids {
            h.update(&(id.len() as u32).to_le_bytes());
            h.update(id.as_bytes());
        }
        for &x in &self.data {
            h.update(&x.to_le_bytes());
        }
        h.finish()
    }
}

/// Wrap an embedding payload as a searchable index, validating shape and
/// id uniqueness.
pub fn build_index(payload: ShardPayload) -> Result<ShardIndex> {
    if payload.dim == 0 {
        return Err(Error::InvalidInput("index dimension must be >= 1".into()));
    }
    if payload.data.len() != payload.ids.len() * payload.dim {
        return Err(Error::InvalidInput(format!(
            "matrix has {} values, expected {} rows x {} dims",
            payload.data.len(),
            payload.ids.len(),
            payload.dim
        )));
    }
    let mut seen: HashSet<&str> = HashSet::with_capacity(payload.ids.len());
    for id in &payload.ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(ShardIndex {
        domain: payload.domain,
        shard: payload.shard,
        dim: payload.dim,
        ids: payload.ids,
        data: payload.data,
    })
}

/// Inner product with f64 accumulation, fixed left-to-right order.
pub fn dot_f64(query: &[f32], row: &[f32]) -> f64 {
    debug_assert_eq!(query.len(), row.len());
    let mut acc = 0f64;
    for i in 0..query.len() {
        acc += f64::from(query[i]) * f64::from(row[i]);
    }
    acc
}

/// Exact top-`k` search: equal to scoring every row and taking the first
/// `k` under the total order. Row scoring parallelizes; the selection is a
/// fixed deterministic reduction.
pub fn search_shard(index: &ShardIndex, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredDoc>> {
    if query.dim() != index.dim {
        return Err(Error::DimMismatch { expected: index.dim, got: query.dim() });
    }
    let scores: Vec<f64> = (0..index.rows())
        .into_par_iter()
        .map(|i| dot_f64(query.values(), index.row(i)))
        .collect();
    let mut order: Vec<usize> = (0..index.rows()).collect();
    let cmp = |&a: &usize, &b: &usize| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| index.ids[a].cmp(&index.ids[b]))
    };
    let k = k.min(order.len());
    if k < order.len() {
        order.select_nth_unstable_by(k, cmp);
        order.truncate(k);
    }
    order.sort_unstable_by(cmp);
    Ok(order
        .into_iter()
        .map(|i| ScoredDoc {
            passage_id: index.ids[i].clone(),
            score: scores[i],
            domain: index.domain.clone(),
            shard: index.shard,
        })
        .collect())
}

/// Sidecar manifest stored next to every embedding/index file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub domain: String,
    pub shard: u32,
    pub dim: usize,
    pub rows: usize,
    /// `hash64` of the payload file bytes, as 16 hex digits.
    pub checksum: String,
}

impl IndexManifest {
    pub fn for_payload_bytes(payload: &ShardPayload, bytes: &[u8]) -> Self {
        Self {
            domain: payload.domain.clone(),
            shard: payload.shard,
            dim: payload.dim,
            rows: payload.rows(),
            checksum: format!("{:016x}", hash64(bytes)),
        }
    }

    pub fn checksum_value(&self) -> Result<u64> {
        u64::from_str_radix(&self.checksum, 16).map_err(|_| Error::Corrupt {
            path: "<manifest>".into(),
            msg: format!("checksum `{}` is not 16 hex digits", self.checksum),
        })
    }
}

/// Write `payload` as `<path>` plus a `<path>.json` sidecar manifest.
pub fn save_index(payload: &ShardPayload, path: &Path) -> Result<IndexManifest> {
    let mut bytes = Vec::new();
    write_embedding_file(&mut bytes, payload)?;
    let manifest = IndexManifest::for_payload_bytes(payload, &bytes);
    fs::write(path, &bytes)?;
    fs::write(manifest_path(path), serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?)?;
    Ok(manifest)
}

pub fn manifest_path(payload_path: &Path) -> std::path::PathBuf {
    let mut os = payload_path.as_os_str().to_os_string();
    os.push(".json");
    std::path::PathBuf::from(os)
}

pub fn read_manifest(path: &Path) -> Result<IndexManifest> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Corrupt {
        path: path.display().to_string(),
        msg: format!("bad manifest: {e}"),
    })
}

/// Load an index, verifying the payload against its sidecar manifest.
/// Any checksum or shape disagreement is a data-integrity error.
pub fn load_index(path: &Path) -> Result<ShardIndex> {
    let manifest = read_manifest(&manifest_path(path))?;
    let bytes = fs::read(path)?;
    let got = hash64(&bytes);
    let expected = manifest.checksum_value()?;
    if got != expected {
        return Err(Error::Checksum { path: path.display().to_string(), expected, got });
    }
    let mut payload = read_embedding_file(bytes.as_slice(), &path.display().to_string())?;
    if payload.dim != manifest.dim || payload.rows() != manifest.rows {
        return Err(Error::Corrupt {
            path: path.display().to_string(),
            msg: format!(
                "payload is {} rows x {} dims but manifest says {} x {}",
                payload.rows(),
                payload.dim,
                manifest.rows,
                manifest.dim
            ),
        });
    }
    payload.domain = manifest.domain;
    payload.shard = manifest.shard;
    build_index(payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_text, EmbedderSpec};

    fn payload(rows: &[(&str, Vec<f32>)], dim: usize) -> ShardPayload {
        ShardPayload {
            domain: "web".into(),
            shard: 0,
            dim,
            ids: rows.iter().map(|(id, _)| (*id).to_string()).collect(),
            data: rows.iter().flat_map(|(_, v)| v.iter().copied()).collect(),
        }
    }

    fn basis(dim: usize, axis: usize) -> Vec<f32> {
        let mut v = vec![0f32; dim];
        v[axis] = 1.0;
        v
    }

    #[test]
    fn empty_index_is_searchable() {
        let index = build_index(payload(&[], 4)).unwrap();
        let hits = search_shard(&index, &EmbeddingVector::new(vec![0.0; 4]), 5).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn orthonormal_rows_pick_the_matching_axis() {
        let index = build_index(payload(
            &[("a", basis(3, 0)), ("b", basis(3, 1)), ("c", basis(3, 2))],
            3,
        ))
        .unwrap();
        let hits = search_shard(&index, &EmbeddingVector::new(basis(3, 1)), 1).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].passage_id, "b");
        assert_eq!(hits[0].score, 1.0);
    }

    #[test]
    fn k_larger_than_rows_returns_all_sorted() {
        let index = build_index(payload(
            &[("a", vec![0.5]), ("b", vec![0.9]), ("c", vec![0.1])],
            1,
        ))
        .unwrap();
        let hits = search_shard(&index, &EmbeddingVector::new(vec![1.0]), 10).unwrap();
        let ids: Vec<&str> = hits.iter().map(|d| d.passage_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "a", "c"]);
    }

    #[test]
    fn equal_scores_break_ties_by_id() {
        let index = build_index(payload(
            &[("z", vec![1.0]), ("a", vec![1.0]), ("m", vec![1.0])],
            1,
        ))
        .unwrap();
        let hits = search_shard(&index, &EmbeddingVector::new(vec![1.0]), 2).unwrap();
        let ids: Vec<&str> = hits.iter().map(|d| d.passage_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "m"]);
    }

    #[test]
    fn build_rejects_duplicates_and_bad_shapes() {
        match build_index(payload(&[("a", vec![1.0]), ("a", vec![2.0])], 1)) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("expected DuplicateId, got {other:?}"),
        }
        let mut bad = payload(&[("a", vec![1.0, 2.0])], 2);
        bad.data.pop();
        assert!(matches!(build_index(bad), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn query_dim_mismatch_is_an_error() {
        let index = build_index(payload(&[("a", vec![1.0, 0.0])], 2)).unwrap();
        assert!(matches!(
            search_shard(&index, &EmbeddingVector::new(vec![1.0]), 1),
            Err(Error::DimMismatch { expected: 2, got: 1 })
        ));
    }

    // Brute-force oracle: score every row, full stable sort, truncate.
    fn brute_force(index: &ShardIndex, query: &EmbeddingVector, k: usize) -> Vec<(String, f64)> {
        let mut all: Vec<(String, f64)> = (0..index.rows())
            .map(|i| (index.ids()[i].clone(), dot_f64(query.values(), index.row(i))))
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force_on_random_matrix() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let dim = 64;
        let rows: Vec<(String, Vec<f32>)> = (0..1000)
            .map(|i| {
                let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (format!("p{i:04}"), v)
            })
            .collect();
        let refs: Vec<(&str, Vec<f32>)> =
            rows.iter().map(|(id, v)| (id.as_str(), v.clone())).collect();
        let index = build_index(payload(&refs, dim)).unwrap();
        for _ in 0..5 {
            let q: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q = EmbeddingVector::new(q);
            let got: Vec<(String, f64)> = search_shard(&index, &q, 10)
                .unwrap()
                .into_iter()
                .map(|d| (d.passage_id, d.score))
                .collect();
            assert_eq!(got, brute_force(&index, &q, 10));
        }
    }

    #[test]
    fn save_load_round_trip_preserves_search_bit_exactly() {
        let spec = EmbedderSpec::new("lexical-bow-v1", 16).unwrap();
        let texts = ["alpha beta gamma", "delta epsilon", "alpha delta", "zeta eta theta iota"];
        let payload = ShardPayload {
            domain: "books".into(),
            shard: 3,
            dim: 16,
            ids: (0..texts.len()).map(|i| format!("d#{i:05}")).collect(),
            data: texts
                .iter()
                .flat_map(|t| embed_text(t, &spec).values().to_vec())
                .collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("books-0003.emb");
        save_index(&payload, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        assert_eq!(loaded.domain(), "books");
        assert_eq!(loaded.shard(), 3);

        let original = build_index(payload).unwrap();
        let q = embed_text("alpha", &spec);
        let a = search_shard(&original, &q, 4).unwrap();
        let b = search_shard(&loaded, &q, 4).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.passage_id, y.passage_id);
            assert_eq!(x.score.to_bits(), y.score.to_bits());
        }
    }

    #[test]
    fn tampered_payload_fails_checksum() {
        let payload = payload(&[("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])], 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("web-0000.emb");
        save_index(&payload, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_index(&path), Err(Error::Checksum { .. })));

        // truncation also fails the checksum before parsing
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_index(&path), Err(Error::Checksum { .. })));
    }
}
