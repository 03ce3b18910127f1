use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Deserialize;

use trove_core::embedding::{EmbedderSpec, DEFAULT_DIM, REFERENCE_EMBEDDER};
use trove_core::filters::{DecontaminationMode, QualityConfig};
use trove_core::pipeline::{
    read_queries_jsonl, run_efficient, run_naive, same_docs, write_bundles_jsonl, ContextBundle,
    DedupConfig, PassageStore, PipelineConfig, RerankerKind,
};
use trove_core::retrieval::RetrievalCache;
use trove_core::subsample::tail_bound;
use trove_core::Error as CoreError;

use crate::commands::{load_indices, parse_list, with_jobs};
use crate::manifest::{manifest_path_for, now_ms, RunManifest};

#[derive(Args)]
pub struct PipelineArgs {
    /// Passage JSONL (texts are needed for filtering and prompts).
    #[arg(long)]
    pub passages: PathBuf,
    /// Query JSONL.
    #[arg(long)]
    pub queries: PathBuf,
    /// Output bundle JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Shard index directory (required unless --naive).
    #[arg(long)]
    pub index_dir: Option<PathBuf>,
    /// TOML config file; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run the naive reference pipeline instead of the efficient one.
    #[arg(long)]
    pub naive: bool,
    /// Run both pipelines, compare bundles, and report fallback rates.
    #[arg(long, conflicts_with = "naive")]
    pub verify: bool,

    /// Subsampling ratios, comma separated.
    #[arg(long)]
    pub p: Option<String>,
    /// Subsampling seeds, comma separated.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Final context size k.
    #[arg(long)]
    pub k: Option<usize>,
    /// Intermediate retrieval depth K.
    #[arg(long)]
    pub retrieve_k: Option<usize>,
    /// Reranking depth K'.
    #[arg(long)]
    pub rerank_k: Option<usize>,
    /// Decontamination mode.
    #[arg(long, value_parser = ["none", "standard", "aggressive"])]
    pub decon: Option<String>,
    /// Enable or disable pool deduplication.
    #[arg(long)]
    pub dedup: Option<bool>,
    /// Reranker: none, oracle, or extern:<path>.
    #[arg(long)]
    pub reranker: Option<String>,
    /// Target domains, comma separated (default: all).
    #[arg(long)]
    pub domains: Option<String>,
    /// Retry depth when a grid point has fewer than k survivors.
    #[arg(long)]
    pub fallback_k: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub embedder: Option<String>,
    /// Per-domain retrieval cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Manifest path (default: <out>.manifest.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Flat key namespace mirroring the pipeline configuration; unknown keys
/// are rejected so typos fail loudly.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    retrieve_k: Option<usize>,
    final_k: Option<usize>,
    rerank_k: Option<usize>,
    ratios: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    dedup: Option<bool>,
    dedup_threshold: Option<f64>,
    dedup_ngram: Option<usize>,
    decon: Option<String>,
    decon_jaccard_threshold: Option<f64>,
    decon_jaccard_n: Option<usize>,
    decon_contiguous_n: Option<usize>,
    quality: Option<bool>,
    quality_min_tokens: Option<usize>,
    quality_require_alphanumeric: Option<bool>,
    quality_max_punct_span: Option<usize>,
    reranker: Option<String>,
    domains: Option<Vec<String>>,
    fallback_k: Option<usize>,
    dim: Option<usize>,
    embedder: Option<String>,
}

fn parse_decon(name: &str) -> Result<DecontaminationMode> {
    match name {
        "none" => Ok(DecontaminationMode::none()),
        "standard" => Ok(DecontaminationMode::standard()),
        "aggressive" => Ok(DecontaminationMode::aggressive()),
        other => Err(CoreError::Config {
            field: "decon".into(),
            msg: format!("`{other}` is not one of none|standard|aggressive"),
        }
        .into()),
    }
}

fn parse_reranker(name: &str) -> Result<RerankerKind> {
    match name {
        "none" => Ok(RerankerKind::None),
        "oracle" => Ok(RerankerKind::Oracle),
        other => match other.strip_prefix("extern:") {
            Some(path) if !path.is_empty() => Ok(RerankerKind::Extern(PathBuf::from(path))),
            _ => Err(CoreError::Config {
                field: "reranker".into(),
                msg: format!("`{other}` is not one of none|oracle|extern:<path>"),
            }
            .into()),
        },
    }
}

fn resolve_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).map_err(|e| CoreError::Config {
                field: "config".into(),
                msg: e.to_string(),
            })?
        }
        None => FileConfig::default(),
    };

    let mut config = PipelineConfig::default();
    if let Some(v) = file.retrieve_k {
        config.retrieve_k = v;
    }
    if let Some(v) = file.final_k {
        config.final_k = v;
    }
    config.rerank_depth = file.rerank_k;
    if let Some(v) = file.ratios {
        config.ratios = v;
    }
    if let Some(v) = file.seeds {
        config.seeds = v;
    }
    if file.dedup.unwrap_or(false) {
        config.dedup = Some(DedupConfig {
            threshold: file.dedup_threshold.unwrap_or_else(|| DedupConfig::default().threshold),
            ngram: file.dedup_ngram.unwrap_or_else(|| DedupConfig::default().ngram),
        });
    }
    if let Some(name) = &file.decon {
        config.decon = parse_decon(name)?;
    }
    if let Some(v) = file.decon_jaccard_threshold {
        config.decon.jaccard_threshold = v;
    }
    if let Some(v) = file.decon_jaccard_n {
        config.decon.jaccard_n = v;
    }
    if let Some(v) = file.decon_contiguous_n {
        config.decon.contiguous_n = v;
    }
    if file.quality.unwrap_or(false) {
        config.quality = Some(QualityConfig {
            min_whitespace_tokens: file.quality_min_tokens.unwrap_or(0),
            require_alphanumeric: file.quality_require_alphanumeric.unwrap_or(false),
            max_punct_span: file.quality_max_punct_span,
            language_predicate: None,
        });
    }
    if let Some(name) = &file.reranker {
        config.reranker = parse_reranker(name)?;
    }
    if let Some(domains) = file.domains {
        config.target_domains = Some(domains.into_iter().collect());
    }
    config.fallback_retrieve_k = file.fallback_k;
    let mut dim = file.dim.unwrap_or(DEFAULT_DIM);
    let mut embedder_name = file.embedder.unwrap_or_else(|| REFERENCE_EMBEDDER.to_string());

    // command-line overrides
    if let Some(raw) = &args.p {
        config.ratios = parse_list(raw, "ratio")?;
    }
    if let Some(raw) = &args.seeds {
        config.seeds = parse_list(raw, "seed")?;
    }
    if let Some(v) = args.k {
        config.final_k = v;
    }
    if let Some(v) = args.retrieve_k {
        config.retrieve_k = v;
    }
    if let Some(v) = args.rerank_k {
        config.rerank_depth = Some(v);
    }
    if let Some(name) = &args.decon {
        config.decon = parse_decon(name)?;
    }
    if let Some(enabled) = args.dedup {
        config.dedup = enabled.then(DedupConfig::default);
    }
    if let Some(name) = &args.reranker {
        config.reranker = parse_reranker(name)?;
    }
    if let Some(raw) = &args.domains {
        let list: Vec<String> = parse_list(raw, "domain")?;
        config.target_domains = Some(list.into_iter().collect());
    }
    if let Some(v) = args.fallback_k {
        config.fallback_retrieve_k = Some(v);
    }
    if let Some(v) = args.dim {
        dim = v;
    }
    if let Some(name) = &args.embedder {
        embedder_name = name.clone();
    }
    config.embedder = EmbedderSpec::new(embedder_name, dim)?;
    config.validate()?;
    Ok(config)
}

fn config_snapshot(config: &PipelineConfig) -> serde_json::Value {
    serde_json::json!({
        "retrieve_k": config.retrieve_k,
        "final_k": config.final_k,
        "rerank_k": config.resolved_rerank_depth(),
        "ratios": config.ratios,
        "seeds": config.seeds,
        "dedup": config.dedup,
        "decon": config.decon,
        "quality": config.quality.as_ref().map(|q| serde_json::json!({
            "min_whitespace_tokens": q.min_whitespace_tokens,
            "require_alphanumeric": q.require_alphanumeric,
            "max_punct_span": q.max_punct_span,
        })),
        "reranker": config.reranker.label(),
        "domains": config.target_domains,
        "fallback_k": config.fallback_retrieve_k,
        "embedder": config.embedder,
    })
}

pub fn run(args: PipelineArgs) -> Result<()> {
    let config = resolve_config(&args)?;
    if !args.naive && args.index_dir.is_none() {
        return Err(CoreError::Config {
            field: "index_dir".into(),
            msg: "required unless --naive is set".into(),
        }
        .into());
    }

    let mut manifest = RunManifest::new("pipeline", config_snapshot(&config));
    manifest.record_input(&args.passages)?;
    manifest.record_input(&args.queries)?;
    manifest.record_fact("mode", if args.naive { "naive" } else { "efficient" });

    let passages = {
        let reader = BufReader::new(
            File::open(&args.passages)
                .with_context(|| format!("opening {}", args.passages.display()))?,
        );
        trove_core::corpus::read_passages_jsonl(reader, &args.passages.display().to_string())?
    };
    let queries = {
        let reader = BufReader::new(
            File::open(&args.queries)
                .with_context(|| format!("opening {}", args.queries.display()))?,
        );
        read_queries_jsonl(reader, &args.queries.display().to_string())?
    };
    let raw_tokens: u64 = passages.iter().map(|p| u64::from(p.word_count)).sum();
    manifest.record_fact("raw_tokens", raw_tokens);
    manifest.record_fact("queries", queries.len());
    manifest.record_fact("passages", passages.len());

    let cache = match &args.cache_dir {
        Some(dir) => Some(RetrievalCache::open(dir)?),
        None => None,
    };

    let started = now_ms();
    let bundles: Vec<ContextBundle> = if args.naive {
        with_jobs(args.jobs, || run_naive(&queries, &passages, &config))??
    } else {
        let shards = load_indices(args.index_dir.as_ref().expect("checked above"))?;
        for shard in &shards {
            manifest.record_fact(
                &format!("index:{}/{}", shard.domain(), shard.shard()),
                format!("{:016x}", shard.content_fingerprint()),
            );
        }
        let store = PassageStore::new(passages.clone())?;
        let result = with_jobs(args.jobs, || {
            let efficient = run_efficient(&queries, &shards, &store, &config, cache.as_ref())?;
            if args.verify {
                let naive = run_naive(&queries, &passages, &config)?;
                Ok::<_, CoreError>((efficient, Some(naive)))
            } else {
                Ok((efficient, None))
            }
        })??;
        if let Some(naive) = result.1 {
            let stats = verify(&result.0, &naive, &config);
            for line in &stats.lines {
                println!("{line}");
            }
            manifest.record_fact("verify_mismatches", stats.mismatches);
            manifest.record_fact("verify_compared", stats.compared);
            if stats.mismatches > 0 {
                manifest.record_stage("pipeline", started, result.0.len() as u64);
                manifest.write(&args.manifest.clone().unwrap_or_else(|| manifest_path_for(&args.out)))?;
                return Err(CoreError::Corrupt {
                    path: args.out.display().to_string(),
                    msg: format!(
                        "{} of {} comparable bundles diverged from the naive pipeline",
                        stats.mismatches, stats.compared
                    ),
                }
                .into());
            }
        }
        result.0
    };
    manifest.record_stage("pipeline", started, bundles.len() as u64);

    let writer = BufWriter::new(
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    write_bundles_jsonl(writer, &bundles)?;
    manifest.record_fact("bundles", bundles.len());
    manifest
        .write(&args.manifest.clone().unwrap_or_else(|| manifest_path_for(&args.out)))?;
    eprintln!("wrote {} bundles to {}", bundles.len(), args.out.display());
    Ok(())
}

struct VerifyStats {
    lines: Vec<String>,
    compared: u64,
    mismatches: u64,
}

/// Compare efficient and naive bundles. A grid point is comparable when
/// at least K' pool documents survived subsampling (K' = k without a
/// reranker); below that, the efficient pool legitimately runs short and
/// the per-ratio rate of such bundles is reported against the exact
/// binomial bound computed from the smallest post-filter pool.
fn verify(
    efficient: &[ContextBundle],
    naive: &[ContextBundle],
    config: &PipelineConfig,
) -> VerifyStats {
    let needed = config.resolved_rerank_depth();
    let naive_by_key: HashMap<(String, u64, u64), &ContextBundle> = naive
        .iter()
        .map(|b| ((b.query_id.clone(), b.p.to_bits(), b.seed), b))
        .collect();
    let mut lines = Vec::new();
    let mut compared = 0u64;
    let mut mismatches = 0u64;
    let ratios: BTreeSet<u64> = efficient.iter().map(|b| b.p.to_bits()).collect();
    for p_bits in ratios {
        let p = f64::from_bits(p_bits);
        let group: Vec<&ContextBundle> =
            efficient.iter().filter(|b| b.p.to_bits() == p_bits).collect();
        let mut group_compared = 0u64;
        let mut group_mismatch = 0u64;
        let mut short = 0u64;
        let mut min_pool = usize::MAX;
        for bundle in &group {
            min_pool = min_pool.min(bundle.filter_report.kept_count);
            if bundle.survivors < config.final_k {
                short += 1;
            }
            if bundle.survivors >= needed {
                group_compared += 1;
                let key = (bundle.query_id.clone(), bundle.p.to_bits(), bundle.seed);
                match naive_by_key.get(&key) {
                    Some(n) if same_docs(bundle, n) => {}
                    _ => group_mismatch += 1,
                }
            }
        }
        let bound = if min_pool == usize::MAX {
            0.0
        } else {
            1.0 - tail_bound(min_pool as u64, p, config.final_k as u64)
        };
        lines.push(format!(
            "verify p={p}: bundles {}, comparable {group_compared}, mismatches {group_mismatch}, \
             short {short} (rate {:.4}, bound 1-tail_bound({min_pool}, {p}, {}) = {bound:.4})",
            group.len(),
            short as f64 / group.len().max(1) as f64,
            config.final_k,
        ));
        compared += group_compared;
        mismatches += group_mismatch;
    }
    VerifyStats { lines, compared, mismatches }
}
