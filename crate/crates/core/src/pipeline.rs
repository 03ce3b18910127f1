//! End-to-end orchestration.
//!
//! [`run_efficient`] retrieves a deep top-K pool once per query, filters
//! it post hoc, and then replays the cheap stages (subsample, rerank,
//! truncate) for every (ratio, seed) grid point. [`run_naive`] is the
//! correctness oracle: it filters the corpus, subsamples it with the same
//! seeded predicate, and retrieves directly from what remains. Whenever at
//! least `final_k` pool documents survive subsampling, the two paths
//! produce identical bundles.
//!
//! The naive path applies its corpus filters (exact dedup, short chunks,
//! element-level predicates) before subsampling; dedup is set-level and
//! does not commute across the subsample, so putting it on the same side
//! in both paths is what makes the equivalence exact.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Passage;
use crate::embedding::{embed_text, EmbedderSpec, EmbeddingVector};
use crate::error::{Error, Result};
use crate::filters::{
    decontaminate, dedup_retrieved, is_contaminated, passes_quality, quality_filter,
    DecontaminationMode, EvalUnit, FilterReport, PoolDoc, QualityConfig, TaskKind,
    DEFAULT_JACCARD_THRESHOLD, DEFAULT_NGRAM,
};
use crate::flat_index::{dot_f64, search_shard, ScoredDoc, ShardIndex};
use crate::rerank::{rerank, ExternScorer, OracleScorer, RerankSpec, Scorer, DEFAULT_RERANK_DEPTH};
use crate::retrieval::{merge_domains, merge_topk, CacheKey, RetrievalCache};
use crate::subsample::{include, SubsampleSpec};

/// Default intermediate retrieval depth K.
pub const DEFAULT_RETRIEVE_K: usize = 1000;
/// Default number of final context documents k.
pub const DEFAULT_FINAL_K: usize = 3;

/// Pool deduplication settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupConfig {
    pub threshold: f64,
    pub ngram: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self { threshold: DEFAULT_JACCARD_THRESHOLD, ngram: DEFAULT_NGRAM }
    }
}

/// Which reranker to apply after subsampling.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum RerankerKind {
    #[default]
    None,
    Oracle,
    Extern(PathBuf),
}

impl RerankerKind {
    pub fn label(&self) -> String {
        match self {
            RerankerKind::None => "none".into(),
            RerankerKind::Oracle => "oracle".into(),
            RerankerKind::Extern(path) => format!("extern:{}", path.display()),
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Intermediate retrieval depth K.
    pub retrieve_k: usize,
    /// Final context size k.
    pub final_k: usize,
    /// Reranking depth K'; ignored (forced to `final_k`) when no reranker
    /// is configured, defaulting to 500 when one is.
    pub rerank_depth: Option<usize>,
    /// Subsampling ratio grid.
    pub ratios: Vec<f64>,
    /// Subsampling seeds.
    pub seeds: Vec<u64>,
    pub dedup: Option<DedupConfig>,
    pub decon: DecontaminationMode,
    pub quality: Option<QualityConfig>,
    pub reranker: RerankerKind,
    /// Restrict retrieval to these domains; `None` means all available.
    pub target_domains: Option<BTreeSet<String>>,
    /// If set, a query whose survivors fall below `final_k` is retried
    /// once with this larger retrieval depth.
    pub fallback_retrieve_k: Option<usize>,
    pub embedder: EmbedderSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            retrieve_k: DEFAULT_RETRIEVE_K,
            final_k: DEFAULT_FINAL_K,
            rerank_depth: None,
            ratios: vec![1.0],
            seeds: vec![100],
            dedup: None,
            decon: DecontaminationMode::none(),
            quality: None,
            reranker: RerankerKind::None,
            target_domains: None,
            fallback_retrieve_k: None,
            embedder: EmbedderSpec::default(),
        }
    }
}

impl PipelineConfig {
    /// Effective K': `final_k` without a reranker, otherwise the
    /// configured depth (default 500) clamped into [final_k, retrieve_k].
    pub fn resolved_rerank_depth(&self) -> usize {
        match self.reranker {
            RerankerKind::None => self.final_k,
            _ => self.rerank_depth.unwrap_or(DEFAULT_RERANK_DEPTH),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: String| Error::Config { field: field.into(), msg };
        if self.final_k == 0 {
            return Err(err("final_k", "must be >= 1".into()));
        }
        if self.retrieve_k < self.final_k {
            return Err(err(
                "retrieve_k",
                format!("must be >= final_k ({} < {})", self.retrieve_k, self.final_k),
            ));
        }
        let depth = self.resolved_rerank_depth();
        if depth < self.final_k || depth > self.retrieve_k {
            return Err(err(
                "rerank_depth",
                format!(
                    "must satisfy final_k <= K' <= retrieve_k (got {depth}, final_k {}, retrieve_k {})",
                    self.final_k, self.retrieve_k
                ),
            ));
        }
        if self.ratios.is_empty() {
            return Err(err("ratios", "at least one subsampling ratio required".into()));
        }
        for &p in &self.ratios {
            if !(0.0..=1.0).contains(&p) {
                return Err(err("ratios", format!("ratio {p} outside [0, 1]")));
            }
        }
        if self.seeds.is_empty() {
            return Err(err("seeds", "at least one seed required".into()));
        }
        if let Some(dedup) = &self.dedup {
            if !(dedup.threshold > 0.0 && dedup.threshold <= 1.0) {
                return Err(err("dedup_threshold", format!("{} outside (0, 1]", dedup.threshold)));
            }
            if dedup.ngram == 0 {
                return Err(err("dedup_ngram", "must be >= 1".into()));
            }
        }
        if !(self.decon.jaccard_threshold > 0.0 && self.decon.jaccard_threshold <= 1.0) {
            return Err(err(
                "decon_jaccard_threshold",
                format!("{} outside (0, 1]", self.decon.jaccard_threshold),
            ));
        }
        if self.decon.jaccard_n == 0 || self.decon.contiguous_n == 0 {
            return Err(err("decon_ngram", "n-gram orders must be >= 1".into()));
        }
        if let Some(fb) = self.fallback_retrieve_k {
            if fb <= self.retrieve_k {
                return Err(err(
                    "fallback_retrieve_k",
                    format!("must exceed retrieve_k ({fb} <= {})", self.retrieve_k),
                ));
            }
        }
        if self.embedder.dim == 0 {
            return Err(err("dim", "embedding dimension must be >= 1".into()));
        }
        Ok(())
    }
}

/// One evaluation unit: a retrieval query plus whatever the task needs
/// (gold answers and few-shot block for downstream tasks, a target token
/// sequence for perplexity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    #[serde(rename = "qid")]
    pub query_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fewshot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl_target_tokens: Option<Vec<String>>,
}

impl QueryRecord {
    pub fn task_kind(&self) -> TaskKind {
        if self.ppl_target_tokens.is_some() {
            TaskKind::Perplexity
        } else {
            TaskKind::Downstream
        }
    }

    pub fn target_text(&self) -> Option<String> {
        self.ppl_target_tokens.as_ref().map(|t| t.join(" "))
    }

    pub fn validate(&self) -> Result<()> {
        if self.query_id.is_empty() {
            return Err(Error::InvalidInput("query with empty qid".into()));
        }
        if self.ppl_target_tokens.is_some() && (!self.answers.is_empty() || self.fewshot.is_some())
        {
            return Err(Error::InvalidInput(format!(
                "query `{}` mixes a perplexity target with downstream fields",
                self.query_id
            )));
        }
        Ok(())
    }
}

/// Output of one (query, ratio, seed) grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    #[serde(rename = "qid")]
    pub query_id: String,
    pub p: f64,
    pub seed: u64,
    /// Final documents, best first, at most `final_k`.
    pub docs: Vec<ScoredDoc>,
    pub prompt: String,
    pub filter_report: FilterReport,
    /// Documents surviving subsampling, before reranking/truncation.
    pub survivors: usize,
    /// Set when fewer than `final_k` documents survived.
    pub fallback: bool,
}

/// Do two bundles select the same documents with identical scores?
pub fn same_docs(a: &ContextBundle, b: &ContextBundle) -> bool {
    a.docs.len() == b.docs.len()
        && a.docs.iter().zip(&b.docs).all(|(x, y)| {
            x.passage_id == y.passage_id && x.score.to_bits() == y.score.to_bits()
        })
}

/// Passage texts addressable by id, with corpus-level statistics.
#[derive(Debug, Clone)]
pub struct PassageStore {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl PassageStore {
    pub fn new(passages: Vec<Passage>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(passages.len());
        for (i, passage) in passages.iter().enumerate() {
            if by_id.insert(passage.passage_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(passage.passage_id.clone()));
            }
        }
        Ok(Self { passages, by_id })
    }

    pub fn get(&self, pid: &str) -> Option<&Passage> {
        self.by_id.get(pid).map(|&i| &self.passages[i])
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn total_words(&self) -> u64 {
        self.passages.iter().map(|p| u64::from(p.word_count)).sum()
    }
}

/// Concatenate context documents in reverse rank order (best document
/// closest to the question), then the few-shot block, then the question,
/// blank-line separated. Empty segments are skipped.
pub fn assemble_context(docs_best_first: &[&str], fewshot: Option<&str>, question: &str) -> String {
    let mut parts: Vec<&str> = docs_best_first.iter().rev().copied().collect();
    if let Some(block) = fewshot {
        if !block.is_empty() {
            parts.push(block);
        }
    }
    if !question.is_empty() {
        parts.push(question);
    }
    parts.join("\n\n")
}

/// Sliding-window perplexity queries: one window per `stride` offset while
/// a full `chunk` fits, split into (prefix, target) halves.
pub fn make_ppl_queries<T: Clone>(
    tokens: &[T],
    chunk: usize,
    stride: usize,
) -> Result<Vec<(Vec<T>, Vec<T>)>> {
    if chunk < 2 || !chunk.is_multiple_of(2) {
        return Err(Error::Config {
            field: "chunk".into(),
            msg: format!("chunk length must be even and >= 2, got {chunk}"),
        });
    }
    if stride == 0 || stride > chunk {
        return Err(Error::Config {
            field: "stride".into(),
            msg: format!("stride must be in [1, chunk], got {stride}"),
        });
    }
    let half = chunk / 2;
    let mut windows = Vec::new();
    let mut offset = 0usize;
    while offset + chunk <= tokens.len() {
        windows.push((
            tokens[offset..offset + half].to_vec(),
            tokens[offset + half..offset + chunk].to_vec(),
        ));
        offset += stride;
    }
    Ok(windows)
}

/// [`make_ppl_queries`] packaged as query records: the prefix becomes the
/// retrieval question, the second half the perplexity target.
pub fn ppl_query_records(
    base_id: &str,
    tokens: &[String],
    chunk: usize,
    stride: usize,
) -> Result<Vec<QueryRecord>> {
    Ok(make_ppl_queries(tokens, chunk, stride)?
        .into_iter()
        .enumerate()
        .map(|(i, (prefix, target))| QueryRecord {
            query_id: format!("{base_id}#w{i:04}"),
            question: prefix.join(" "),
            answers: Vec::new(),
            fewshot: None,
            ppl_target_tokens: Some(target),
        })
        .collect())
}

fn eval_unit<'a>(record: &'a QueryRecord, target: &'a Option<String>) -> EvalUnit<'a> {
    EvalUnit {
        question: &record.question,
        answers: &record.answers,
        target: target.as_deref(),
    }
}

fn make_scorer(config: &PipelineConfig, record: &QueryRecord) -> Result<Option<Box<dyn Scorer>>> {
    match &config.reranker {
        RerankerKind::None => Ok(None),
        RerankerKind::Oracle => Ok(Some(Box::new(OracleScorer::new(&record.answers)?))),
        RerankerKind::Extern(path) => {
            Ok(Some(Box::new(ExternScorer { program: path.clone() })))
        }
    }
}

/// Retrieve, filter, and grid-subsample every query against the shard
/// indices. Bundles come back in (query, ratio, seed) order, one per grid
/// point per query, and are byte-deterministic for a given config
/// regardless of thread count.
pub fn run_efficient(
    queries: &[QueryRecord],
    shards: &[ShardIndex],
    store: &PassageStore,
    config: &PipelineConfig,
    cache: Option<&RetrievalCache>,
) -> Result<Vec<ContextBundle>> {
    config.validate()?;
    if shards.is_empty() {
        return Err(Error::InvalidInput("no shard indices provided".into()));
    }
    for shard in shards {
        if shard.dim() != config.embedder.dim {
            return Err(Error::DimMismatch { expected: config.embedder.dim, got: shard.dim() });
        }
    }
    for record in queries {
        record.validate()?;
    }

    let plan = RetrievalPlan::new(shards, config.target_domains.as_ref())?;

    let per_query: Vec<Result<Vec<ContextBundle>>> = queries
        .par_iter()
        .map(|record| run_query_efficient(record, &plan, store, config, cache))
        .collect();

    let mut bundles = Vec::with_capacity(queries.len() * config.ratios.len() * config.seeds.len());
    for result in per_query {
        bundles.extend(result?);
    }
    Ok(bundles)
}

/// Shards grouped by domain, the requested target set, and per-domain
/// content fingerprints for cache addressing.
struct RetrievalPlan<'a> {
    by_domain: BTreeMap<String, Vec<&'a ShardIndex>>,
    targets: BTreeSet<String>,
    fingerprints: BTreeMap<String, u64>,
}

impl<'a> RetrievalPlan<'a> {
    fn new(shards: &'a [ShardIndex], targets: Option<&BTreeSet<String>>) -> Result<Self> {
        let mut by_domain: BTreeMap<String, Vec<&ShardIndex>> = BTreeMap::new();
        for shard in shards {
            by_domain.entry(shard.domain().to_string()).or_default().push(shard);
        }
        let targets: BTreeSet<String> = match targets {
            Some(domains) => {
                for domain in domains {
                    if !by_domain.contains_key(domain) {
                        return Err(Error::MissingDomain(domain.clone()));
                    }
                }
                domains.clone()
            }
            None => by_domain.keys().cloned().collect(),
        };
        let fingerprints = by_domain
            .iter()
            .map(|(domain, shards)| {
                let parts: Vec<[u8; 8]> =
                    shards.iter().map(|s| s.content_fingerprint().to_le_bytes()).collect();
                let slices: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
                (domain.clone(), crate::hash::hash64_parts(&slices))
            })
            .collect();
        Ok(Self { by_domain, targets, fingerprints })
    }
}

/// Build one query's filtered pool at depth `k`.
fn build_pool(
    record: &QueryRecord,
    qvec: &EmbeddingVector,
    plan: &RetrievalPlan,
    store: &PassageStore,
    config: &PipelineConfig,
    cache: Option<&RetrievalCache>,
    k: usize,
) -> Result<(Vec<PoolDoc>, FilterReport)> {
    let mut per_domain: BTreeMap<String, Vec<ScoredDoc>> = BTreeMap::new();
    for domain in &plan.targets {
        let shards = &plan.by_domain[domain];
        let key = CacheKey {
            query_id: &record.query_id,
            domain,
            embedder: &config.embedder.name,
            depth: k,
            index_fingerprint: plan.fingerprints[domain],
        };
        let docs = match cache {
            Some(cache) => match cache.get(&key)? {
                Some(docs) => docs,
                None => {
                    let docs = search_domain(shards, qvec, k)?;
                    cache.put(&key, &docs)?;
                    docs
                }
            },
            None => search_domain(shards, qvec, k)?,
        };
        per_domain.insert(domain.clone(), docs);
    }
    let pooled = merge_domains(&per_domain, &plan.targets, k)?;

    let mut pool = Vec::with_capacity(pooled.len());
    for doc in pooled {
        let passage = store.get(&doc.passage_id).ok_or_else(|| Error::Corrupt {
            path: "<passage store>".into(),
            msg: format!("passage `{}` is indexed but missing from the store", doc.passage_id),
        })?;
        pool.push(PoolDoc { doc, text: passage.text.clone() });
    }

    let mut report = FilterReport { removed: Vec::new(), kept_count: pool.len() };
    if let Some(dedup) = &config.dedup {
        let (kept, stage) = dedup_retrieved(pool, dedup.threshold, dedup.ngram);
        pool = kept;
        report.absorb(stage);
    }
    let target = record.target_text();
    let (kept, stage) =
        decontaminate(pool, &eval_unit(record, &target), &config.decon, record.task_kind());
    pool = kept;
    report.absorb(stage);
    if let Some(quality) = &config.quality {
        let (kept, stage) = quality_filter(pool, quality);
        pool = kept;
        report.absorb(stage);
    }
    Ok((pool, report))
}

fn search_domain(
    shards: &[&ShardIndex],
    qvec: &EmbeddingVector,
    k: usize,
) -> Result<Vec<ScoredDoc>> {
    let lists: Vec<Vec<ScoredDoc>> = shards
        .par_iter()
        .map(|shard| search_shard(shard, qvec, k))
        .collect::<Result<_>>()?;
    merge_topk(&lists, k)
}

fn run_query_efficient(
    record: &QueryRecord,
    plan: &RetrievalPlan,
    store: &PassageStore,
    config: &PipelineConfig,
    cache: Option<&RetrievalCache>,
) -> Result<Vec<ContextBundle>> {
    let qvec = embed_text(&record.question, &config.embedder);
    let (base_pool, base_report) =
        build_pool(record, &qvec, plan, store, config, cache, config.retrieve_k)?;
    // built lazily, at most once, when a grid point runs short
    let mut fallback_pool: Option<(Vec<PoolDoc>, FilterReport)> = None;

    let rerank_depth = config.resolved_rerank_depth();
    let mut bundles = Vec::with_capacity(config.ratios.len() * config.seeds.len());
    for &ratio in &config.ratios {
        for &seed in &config.seeds {
            let spec = SubsampleSpec { ratio, seed };
            let survivors_of = |pool: &[PoolDoc]| -> Vec<PoolDoc> {
                pool.iter().filter(|d| include(&d.doc.passage_id, &spec)).cloned().collect()
            };
            let mut survivors = survivors_of(&base_pool);
            let mut report = base_report.clone();
            if survivors.len() < config.final_k {
                if let Some(fb_k) = config.fallback_retrieve_k {
                    if fallback_pool.is_none() {
                        fallback_pool =
                            Some(build_pool(record, &qvec, plan, store, config, cache, fb_k)?);
                    }
                    let (fb_pool, fb_report) = fallback_pool.as_ref().unwrap();
                    survivors = survivors_of(fb_pool);
                    report = fb_report.clone();
                }
            }
            let survivor_count = survivors.len();

            let finals: Vec<PoolDoc> = match make_scorer(config, record)? {
                None => survivors.into_iter().take(config.final_k).collect(),
                Some(scorer) => {
                    let spec = RerankSpec {
                        scorer: scorer.name().to_string(),
                        rerank_depth,
                        final_k: config.final_k,
                    };
                    rerank(survivors, &record.question, scorer.as_ref(), &spec)?
                }
            };

            let texts: Vec<&str> = finals.iter().map(|d| d.text.as_str()).collect();
            let prompt = assemble_context(&texts, record.fewshot.as_deref(), &record.question);
            bundles.push(ContextBundle {
                query_id: record.query_id.clone(),
                p: ratio,
                seed,
                docs: finals.into_iter().map(|d| d.doc).collect(),
                prompt,
                filter_report: report,
                survivors: survivor_count,
                fallback: survivor_count < config.final_k,
            });
        }
    }
    Ok(bundles)
}

/// Corpus-level exact deduplication: drop passages shorter than
/// `min_words`, then keep only the lowest passage id among byte-identical
/// texts. Mirrors what pool dedup does to exact duplicates (equal texts
/// embed to equal scores, so the pool keeps the id-ascending winner).
pub fn dedup_corpus_exact(passages: &[Passage], min_words: usize) -> Vec<Passage> {
    let mut representative: HashMap<&str, &str> = HashMap::new();
    for passage in passages {
        if (passage.word_count as usize) < min_words {
            continue;
        }
        representative
            .entry(passage.text.as_str())
            .and_modify(|best| {
                if passage.passage_id.as_str() < *best {
                    *best = passage.passage_id.as_str();
                }
            })
            .or_insert(passage.passage_id.as_str());
    }
    passages
        .iter()
        .filter(|p| {
            (p.word_count as usize) >= min_words
                && representative[p.text.as_str()] == p.passage_id
        })
        .cloned()
        .collect()
}

/// The naive oracle: filter the corpus, then for every (ratio, seed)
/// subsample it with the same `include` predicate, build a fresh
/// unsharded view, and retrieve directly. Intended for desk-scale corpora.
///
/// When the config restricts `target_domains`, the corpus is restricted
/// to those domains first, mirroring what domain merging does on the
/// efficient path.
pub fn run_naive(
    queries: &[QueryRecord],
    passages: &[Passage],
    config: &PipelineConfig,
) -> Result<Vec<ContextBundle>> {
    config.validate()?;
    for record in queries {
        record.validate()?;
    }

    let in_scope: Vec<Passage> = match &config.target_domains {
        Some(domains) => {
            passages.iter().filter(|p| domains.contains(&p.domain)).cloned().collect()
        }
        None => passages.to_vec(),
    };
    // corpus-level filtering (the naive path filters before subsampling)
    let base: Vec<Passage> = match &config.dedup {
        Some(dedup) => dedup_corpus_exact(&in_scope, dedup.ngram),
        None => in_scope,
    };
    let rows: Vec<EmbeddingVector> = base
        .par_iter()
        .map(|p| embed_text(&p.text, &config.embedder))
        .collect();

    let rerank_depth = config.resolved_rerank_depth();
    let per_query: Vec<Result<Vec<ContextBundle>>> = queries
        .par_iter()
        .map(|record| {
            let qvec = embed_text(&record.question, &config.embedder);
            let target = record.target_text();
            let eval = eval_unit(record, &target);
            let eligible: Vec<bool> = base
                .par_iter()
                .map(|p| {
                    !is_contaminated(&p.text, &eval, &config.decon, record.task_kind())
                        && config.quality.as_ref().is_none_or(|q| passes_quality(&p.text, q))
                })
                .collect();

            let mut bundles = Vec::with_capacity(config.ratios.len() * config.seeds.len());
            for &ratio in &config.ratios {
                for &seed in &config.seeds {
                    let spec = SubsampleSpec { ratio, seed };
                    let candidates: Vec<usize> = (0..base.len())
                        .filter(|&i| eligible[i] && include(&base[i].passage_id, &spec))
                        .collect();
                    let survivor_count = candidates.len();

                    let mut scored: Vec<(usize, f64)> = candidates
                        .iter()
                        .map(|&i| (i, dot_f64(qvec.values(), rows[i].values())))
                        .collect();
                    scored.sort_by(|a, b| {
                        b.1.total_cmp(&a.1)
                            .then_with(|| base[a.0].passage_id.cmp(&base[b.0].passage_id))
                    });
                    scored.truncate(rerank_depth);

                    let head: Vec<PoolDoc> = scored
                        .into_iter()
                        .map(|(i, score)| PoolDoc {
                            doc: ScoredDoc {
                                passage_id: base[i].passage_id.clone(),
                                score,
                                domain: base[i].domain.clone(),
                                shard: base[i].shard,
                            },
                            text: base[i].text.clone(),
                        })
                        .collect();

                    let finals: Vec<PoolDoc> = match make_scorer(config, record)? {
                        None => head.into_iter().take(config.final_k).collect(),
                        Some(scorer) => {
                            let spec = RerankSpec {
                                scorer: scorer.name().to_string(),
                                rerank_depth,
                                final_k: config.final_k,
                            };
                            rerank(head, &record.question, scorer.as_ref(), &spec)?
                        }
                    };

                    let texts: Vec<&str> = finals.iter().map(|d| d.text.as_str()).collect();
                    let prompt =
                        assemble_context(&texts, record.fewshot.as_deref(), &record.question);
                    bundles.push(ContextBundle {
                        query_id: record.query_id.clone(),
                        p: ratio,
                        seed,
                        docs: finals.into_iter().map(|d| d.doc).collect(),
                        prompt,
                        filter_report: FilterReport::default(),
                        survivors: survivor_count,
                        fallback: survivor_count < config.final_k,
                    });
                }
            }
            Ok(bundles)
        })
        .collect();

    let mut bundles = Vec::new();
    for result in per_query {
        bundles.extend(result?);
    }
    Ok(bundles)
}

pub fn read_queries_jsonl<R: BufRead>(reader: R, path: &str) -> Result<Vec<QueryRecord>> {
    let mut queries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QueryRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_string(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        record.validate().map_err(|e| Error::Parse {
            path: path.to_string(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        if !seen.insert(record.query_id.clone()) {
            return Err(Error::DuplicateId(record.query_id));
        }
        queries.push(record);
    }
    Ok(queries)
}

pub fn write_bundles_jsonl<W: Write>(mut writer: W, bundles: &[ContextBundle]) -> Result<()> {
    for bundle in bundles {
        serde_json::to_writer(&mut writer, bundle).map_err(std::io::Error::other)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_bundles_jsonl<R: BufRead>(reader: R, path: &str) -> Result<Vec<ContextBundle>> {
    let mut bundles = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        bundles.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_string(),
            line: idx + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(bundles)
}
