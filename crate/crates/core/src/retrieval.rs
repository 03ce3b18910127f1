//! Scatter-gather retrieval over shard indices with exact merging.
//!
//! Because scoring is element-wise and the result order is total, fetching
//! top-K per shard and merging is identical to searching one concatenated
//! index — for any shard count. Per-domain results can be cached and
//! re-merged later to study datastore compositions without re-retrieval.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::flat_index::{rank_cmp, search_shard, ScoredDoc, ShardIndex};
use crate::hash::hash64_parts;

/// Merged top-K retrieval output for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    #[serde(rename = "qid")]
    pub query_id: String,
    /// Requested depth K (the result may be shorter).
    #[serde(rename = "K")]
    pub depth: usize,
    pub domains: BTreeSet<String>,
    pub docs: Vec<ScoredDoc>,
}

/// Merge pre-sorted, disjoint scored lists into the global top-`k`.
///
/// Inputs must each be sorted by the retrieval total order and drawn from
/// disjoint passage sets; a passage id appearing in two lists is an error.
pub fn merge_topk(lists: &[Vec<ScoredDoc>], k: usize) -> Result<Vec<ScoredDoc>> {
    let mut seen: HashSet<&str> = HashSet::new();
    for list in lists {
        debug_assert!(list.windows(2).all(|w| rank_cmp(&w[0], &w[1]).is_le()));
        for doc in list {
            if !seen.insert(doc.passage_id.as_str()) {
                return Err(Error::DuplicateId(doc.passage_id.clone()));
            }
        }
    }
    let mut cursors = vec![0usize; lists.len()];
    let mut out = Vec::with_capacity(k.min(seen.len()));
    while out.len() < k {
        let mut best: Option<usize> = None;
        for (li, list) in lists.iter().enumerate() {
            if cursors[li] >= list.len() {
                continue;
            }
            let candidate = &list[cursors[li]];
            best = match best {
                None => Some(li),
                Some(bi) if rank_cmp(candidate, &lists[bi][cursors[bi]]).is_lt() => Some(li),
                keep => keep,
            };
        }
        match best {
            Some(li) => {
                out.push(lists[li][cursors[li]].clone());
                cursors[li] += 1;
            }
            None => break,
        }
    }
    Ok(out)
}

/// Top-`k` over all shards: per-shard search in parallel, then an exact
/// merge. Equal to searching the concatenation of the shards.
pub fn search_distributed(
    query_id: &str,
    query: &EmbeddingVector,
    shards: &[ShardIndex],
    k: usize,
) -> Result<RetrievalResult> {
    for shard in shards {
        if shard.dim() != query.dim() {
            return Err(Error::DimMismatch { expected: shard.dim(), got: query.dim() });
        }
    }
    let lists: Vec<Vec<ScoredDoc>> = shards
        .par_iter()
        .map(|shard| search_shard(shard, query, k).expect("dims validated above"))
        .collect();
    let docs = merge_topk(&lists, k)?;
    Ok(RetrievalResult {
        query_id: query_id.to_string(),
        depth: k,
        domains: shards.iter().map(|s| s.domain().to_string()).collect(),
        docs,
    })
}

/// Per-domain top-`k` lists (each merged across that domain's shards).
pub fn retrieve_per_domain(
    query: &EmbeddingVector,
    shards: &[ShardIndex],
    k: usize,
) -> Result<BTreeMap<String, Vec<ScoredDoc>>> {
    let mut by_domain: BTreeMap<&str, Vec<&ShardIndex>> = BTreeMap::new();
    for shard in shards {
        by_domain.entry(shard.domain()).or_default().push(shard);
    }
    let mut out = BTreeMap::new();
    for (domain, domain_shards) in by_domain {
        for shard in &domain_shards {
            if shard.dim() != query.dim() {
                return Err(Error::DimMismatch { expected: shard.dim(), got: query.dim() });
            }
        }
        let lists: Vec<Vec<ScoredDoc>> = domain_shards
            .par_iter()
            .map(|shard| search_shard(shard, query, k).expect("dims validated above"))
            .collect();
        out.insert(domain.to_string(), merge_topk(&lists, k)?);
    }
    Ok(out)
}

/// Pool the cached per-domain top-K lists for `targets` and re-select the
/// global top-`k`. A target domain with no cached list is an error.
pub fn merge_domains(
    per_domain: &BTreeMap<String, Vec<ScoredDoc>>,
    targets: &BTreeSet<String>,
    k: usize,
) -> Result<Vec<ScoredDoc>> {
    let mut lists: Vec<Vec<ScoredDoc>> = Vec::with_capacity(targets.len());
    for domain in targets {
        match per_domain.get(domain) {
            Some(list) => lists.push(list.clone()),
            None => return Err(Error::MissingDomain(domain.clone())),
        }
    }
    merge_topk(&lists, k)
}

/// Key identifying one cached per-domain retrieval.
///
/// `index_fingerprint` must cover the content of the domain's shard
/// indices (e.g. a hash of their payload checksums) so that re-embedding
/// or re-sharding invalidates the entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheKey<'a> {
    pub query_id: &'a str,
    pub domain: &'a str,
    pub embedder: &'a str,
    pub depth: usize,
    pub index_fingerprint: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    qid: String,
    domain: String,
    #[serde(rename = "K")]
    depth: usize,
    docs: Vec<CacheDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheDoc {
    pid: String,
    score: f64,
    shard: u32,
}

/// Content-addressed store of per-domain retrieval results, one JSON line
/// per (query, domain) in a file named by the key hash.
#[derive(Debug, Clone)]
pub struct RetrievalCache {
    dir: PathBuf,
}

impl RetrievalCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        let address = hash64_parts(&[
            key.query_id.as_bytes(),
            &[0xff],
            key.domain.as_bytes(),
            &[0xff],
            key.embedder.as_bytes(),
            &[0xff],
            &(key.depth as u64).to_le_bytes(),
            &key.index_fingerprint.to_le_bytes(),
        ]);
        self.dir.join(format!("{address:016x}.json"))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<Vec<ScoredDoc>>> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let record: CacheRecord = serde_json::from_str(&text).map_err(|e| Error::Corrupt {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        if record.qid != key.query_id || record.domain != key.domain || record.depth != key.depth {
            return Err(Error::Corrupt {
                path: path.display().to_string(),
                msg: "cache record does not match its key".into(),
            });
        }
        Ok(Some(
            record
                .docs
                .into_iter()
                .map(|d| ScoredDoc {
                    passage_id: d.pid,
                    score: d.score,
                    domain: key.domain.to_string(),
                    shard: d.shard,
                })
                .collect(),
        ))
    }

    pub fn put(&self, key: &CacheKey, docs: &[ScoredDoc]) -> Result<()> {
        let record = CacheRecord {
            qid: key.query_id.to_string(),
            domain: key.domain.to_string(),
            depth: key.depth,
            docs: docs
                .iter()
                .map(|d| CacheDoc { pid: d.passage_id.clone(), score: d.score, shard: d.shard })
                .collect(),
        };
        let line = serde_json::to_string(&record).map_err(std::io::Error::other)?;
        fs::write(self.path_for(key), line + "\n")?;
        Ok(())
    }
}
