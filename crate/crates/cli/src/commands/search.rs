use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;

use trove_core::embedding::{embed_text, EmbedderSpec, REFERENCE_EMBEDDER};
use trove_core::flat_index::ShardIndex;
use trove_core::pipeline::{read_queries_jsonl, QueryRecord, DEFAULT_RETRIEVE_K};
use trove_core::retrieval::{
    merge_domains, merge_topk, CacheKey, RetrievalCache, RetrievalResult,
};

use crate::commands::{load_indices, parse_list, with_jobs};

#[derive(Args)]
pub struct SearchArgs {
    /// Directory of .emb shard files with sidecar manifests.
    #[arg(long)]
    pub index_dir: PathBuf,
    /// Single ad-hoc query text.
    #[arg(long, conflicts_with = "queries")]
    pub query: Option<String>,
    /// Query JSONL file ({"qid", "question", ...}).
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RETRIEVE_K)]
    pub k: usize,
    /// Restrict to these domains (comma separated); default all.
    #[arg(long)]
    pub domains: Option<String>,
    /// Per-domain retrieval cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Output JSONL (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = REFERENCE_EMBEDDER)]
    pub embedder: String,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub fn run(args: SearchArgs) -> Result<()> {
    if args.k == 0 {
        return Err(trove_core::Error::Config { field: "k".into(), msg: "must be >= 1".into() }
            .into());
    }
    let shards = load_indices(&args.index_dir)?;
    let dim = shards[0].dim();
    for s in &shards {
        if s.dim() != dim {
            return Err(trove_core::Error::DimMismatch { expected: dim, got: s.dim() }.into());
        }
    }
    let spec = EmbedderSpec::new(&args.embedder, dim)?;

    let queries: Vec<QueryRecord> = match (&args.query, &args.queries) {
        (Some(text), None) => vec![QueryRecord {
            query_id: "q0".into(),
            question: text.clone(),
            answers: Vec::new(),
            fewshot: None,
            ppl_target_tokens: None,
        }],
        (None, Some(path)) => {
            let reader = BufReader::new(
                File::open(path).with_context(|| format!("opening {}", path.display()))?,
            );
            read_queries_jsonl(reader, &path.display().to_string())?
        }
        _ => anyhow::bail!("exactly one of --query or --queries is required"),
    };

    let mut by_domain: BTreeMap<String, Vec<&ShardIndex>> = BTreeMap::new();
    for shard in &shards {
        by_domain.entry(shard.domain().to_string()).or_default().push(shard);
    }
    let targets: BTreeSet<String> = match &args.domains {
        Some(raw) => {
            let list: Vec<String> = parse_list(raw, "domain")?;
            for domain in &list {
                if !by_domain.contains_key(domain) {
                    return Err(trove_core::Error::MissingDomain(domain.clone()).into());
                }
            }
            list.into_iter().collect()
        }
        None => by_domain.keys().cloned().collect(),
    };
    let fingerprints: BTreeMap<String, u64> = by_domain
        .iter()
        .map(|(domain, shards)| {
            let parts: Vec<[u8; 8]> =
                shards.iter().map(|s| s.content_fingerprint().to_le_bytes()).collect();
            let slices: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
            (domain.clone(), trove_core::hash::hash64_parts(&slices))
        })
        .collect();
    let cache = match &args.cache_dir {
        Some(dir) => Some(RetrievalCache::open(dir)?),
        None => None,
    };

    let results: Vec<RetrievalResult> = with_jobs(args.jobs, || {
        queries
            .par_iter()
            .map(|record| -> trove_core::Result<RetrievalResult> {
                let qvec = embed_text(&record.question, &spec);
                let mut per_domain = BTreeMap::new();
                for domain in &targets {
                    let key = CacheKey {
                        query_id: &record.query_id,
                        domain,
                        embedder: &spec.name,
                        depth: args.k,
                        index_fingerprint: fingerprints[domain],
                    };
                    let docs = match &cache {
                        Some(cache) => match cache.get(&key)? {
                            Some(docs) => docs,
                            None => {
                                let docs = search_one_domain(&by_domain[domain], &qvec, args.k)?;
                                cache.put(&key, &docs)?;
                                docs
                            }
                        },
                        None => search_one_domain(&by_domain[domain], &qvec, args.k)?,
                    };
                    per_domain.insert(domain.clone(), docs);
                }
                Ok(RetrievalResult {
                    query_id: record.query_id.clone(),
                    depth: args.k,
                    domains: targets.clone(),
                    docs: merge_domains(&per_domain, &targets, args.k)?,
                })
            })
            .collect::<trove_core::Result<Vec<_>>>()
    })??;

    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    for result in &results {
        serde_json::to_writer(&mut out, result)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn search_one_domain(
    shards: &[&ShardIndex],
    qvec: &trove_core::EmbeddingVector,
    k: usize,
) -> trove_core::Result<Vec<trove_core::ScoredDoc>> {
    let lists: Vec<Vec<trove_core::ScoredDoc>> = shards
        .iter()
        .map(|s| trove_core::flat_index::search_shard(s, qvec, k))
        .collect::<trove_core::Result<_>>()?;
    merge_topk(&lists, k)
}
