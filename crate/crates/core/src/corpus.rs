//! Corpus ingestion: chunk raw documents into fixed-size passages and
//! partition passages into per-domain shards.
//!
//! Tokenization throughout is whitespace splitting on Unicode whitespace;
//! chunk boundaries never split a token, so concatenating a document's
//! passage texts reproduces its token sequence exactly.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default passage size in whitespace tokens.
pub const DEFAULT_MAX_WORDS: usize = 256;

/// One input document. `doc_id` must be unique within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub domain: String,
    pub text: String,
}

/// A fixed-size chunk of a document; the unit of embedding and retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    /// `<doc_id>#<zero-padded chunk ordinal>`; globally unique and sortable.
    #[serde(rename = "pid")]
    pub passage_id: String,
    pub domain: String,
    pub shard: u32,
    pub text: String,
    /// Number of whitespace-separated tokens in `text`.
    #[serde(rename = "wc")]
    pub word_count: u32,
}

/// How passages of each domain are assigned to shards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentRule {
    /// Shard = passage ordinal within its domain, modulo the domain's
    /// shard count. Keeps shard sizes within one of each other.
    RoundRobinByOrdinal,
}

/// Per-domain shard counts plus the assignment rule.
///
/// Domains listed in `per_domain` use their own count; any other domain
/// uses `default_shards` if set, otherwise it is an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardingPlan {
    pub default_shards: Option<u32>,
    pub per_domain: BTreeMap<String, u32>,
    pub rule: AssignmentRule,
}

impl ShardingPlan {
    /// Same shard count for every domain.
    pub fn uniform(shards: u32) -> Result<Self> {
        if shards == 0 {
            return Err(Error::Config {
                field: "shards".into(),
                msg: "shard count must be >= 1".into(),
            });
        }
        Ok(Self {
            default_shards: Some(shards),
            per_domain: BTreeMap::new(),
            rule: AssignmentRule::RoundRobinByOrdinal,
        })
    }

    /// Explicit per-domain counts; domains not listed are rejected.
    pub fn per_domain(counts: BTreeMap<String, u32>) -> Result<Self> {
        for (domain, &m) in &counts {
            if m == 0 {
                return Err(Error::Config {
                    field: format!("shards[{domain}]"),
                    msg: "shard count must be >= 1".into(),
                });
            }
        }
        Ok(Self {
            default_shards: None,
            per_domain: counts,
            rule: AssignmentRule::RoundRobinByOrdinal,
        })
    }

    pub fn shards_for(&self, domain: &str) -> Result<u32> {
        if let Some(&m) = self.per_domain.get(domain) {
            return Ok(m);
        }
        self.default_shards
            .ok_or_else(|| Error::UnknownDomain(domain.to_string()))
    }
}

/// Format a passage id from its document id and chunk ordinal.
pub fn passage_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal:05}")
}

/// Split each document into passages of at most `max_words` whitespace
/// tokens. All passages of a document except possibly the last have
/// exactly `max_words` tokens; passage text is the chunk's tokens joined
/// by single spaces. Empty documents yield no passages.
pub fn chunk_corpus(docs: &[RawDocument], max_words: usize) -> Vec<Passage> {
    assert!(max_words >= 1, "max_words must be >= 1");
    let mut out = Vec::new();
    for doc in docs {
        let tokens: Vec<&str> = doc.text.split_whitespace().collect();
        for (ordinal, chunk) in tokens.chunks(max_words).enumerate() {
            out.push(Passage {
                passage_id: passage_id(&doc.doc_id, ordinal),
                domain: doc.domain.clone(),
                shard: 0,
                text: chunk.join(" "),
                word_count: chunk.len() as u32,
            });
        }
    }
    out
}

/// Assign every passage to a shard according to `plan`. Within each
/// domain, assignment is round-robin over the passage's ordinal position
/// in the input, so shard sizes differ by at most one.
pub fn assign_shards(passages: &[Passage], plan: &ShardingPlan) -> Result<Vec<Passage>> {
    let mut counters: BTreeMap<&str, u64> = BTreeMap::new();
    let mut out = Vec::with_capacity(passages.len());
    for passage in passages {
        let m = plan.shards_for(&passage.domain)?;
        let ordinal = counters.entry(passage.domain.as_str()).or_insert(0);
        let shard = (*ordinal % u64::from(m)) as u32;
        *ordinal += 1;
        let mut assigned = passage.clone();
        assigned.shard = shard;
        out.push(assigned);
    }
    Ok(out)
}

/// Read a JSONL corpus (`{"id", "domain", "text"}` per line), validating
/// id/domain non-emptiness and id uniqueness.
pub fn read_documents_jsonl<R: BufRead>(reader: R, path: &str) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: RawDocument = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_string(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        if doc.doc_id.is_empty() {
            return Err(Error::Parse {
                path: path.to_string(),
                line: idx + 1,
                msg: "empty document id".into(),
            });
        }
        if doc.domain.is_empty() {
            return Err(Error::Parse {
                path: path.to_string(),
                line: idx + 1,
                msg: format!("document `{}` has an empty domain", doc.doc_id),
            });
        }
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::DuplicateId(doc.doc_id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Read a passage JSONL file (`{"pid", "domain", "shard", "text", "wc"}`).
pub fn read_passages_jsonl<R: BufRead>(reader: R, path: &str) -> Result<Vec<Passage>> {
    let mut passages = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let passage: Passage = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_string(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        passages.push(passage);
    }
    Ok(passages)
}

pub fn write_passages_jsonl<W: Write>(mut writer: W, passages: &[Passage]) -> Result<()> {
    for passage in passages {
        serde_json::to_writer(&mut writer, passage).map_err(std::io::Error::other)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
