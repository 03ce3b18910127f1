//! Building blocks for studying how retrieval-based language models behave
//! as their datastore grows, without rebuilding the datastore for every
//! experimental variation.
//!
//! The expensive steps — embedding, indexing, retrieval — run once over
//! sharded flat indices. Everything researchers want to vary afterwards
//! (deduplication, decontamination, quality filters, subsampling ratio and
//! seed, reranking) is applied post hoc to each query's retrieved top-K
//! pool. Sharded retrieval merges losslessly, subsampling is a pure
//! function of (passage id, seed), and all filters except dedup are
//! element-level, so grid points are cheap replays of cached work and the
//! whole pipeline is reproducible bit for bit.
//!
//! [`pipeline::run_naive`] implements the textbook order (filter the
//! corpus, subsample it, index, retrieve) and serves as the correctness
//! oracle for [`pipeline::run_efficient`] at desk scale; the exact
//! binomial tail bound in [`subsample`] quantifies how often the two may
//! legitimately disagree.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod filters;
pub mod flat_index;
pub mod flops;
pub mod hash;
pub mod minhash;
pub mod pipeline;
pub mod rerank;
pub mod retrieval;
pub mod subsample;

pub use corpus::{chunk_corpus, assign_shards, Passage, RawDocument, ShardingPlan};
pub use embedding::{embed_shard, embed_text, EmbedderSpec, EmbeddingVector, ShardPayload};
pub use error::{Error, Result};
pub use filters::{
    dedup_retrieved, decontaminate, jaccard_ngram, longest_contiguous_overlap, quality_filter,
    DecontaminationMode, DeconVariant, FilterReport, PoolDoc, QualityConfig, TaskKind,
};
pub use flat_index::{build_index, load_index, save_index, search_shard, ScoredDoc, ShardIndex};
pub use flops::{flops_datastore, flops_pretrain, pareto_frontier, FlopsModel, MetricDirection, ParetoPoint};
pub use pipeline::{
    assemble_context, make_ppl_queries, run_efficient, run_naive, ContextBundle, PassageStore,
    PipelineConfig, QueryRecord, RerankerKind,
};
pub use rerank::{oracle_score, rerank, OracleScorer, RerankSpec, Scorer};
pub use retrieval::{merge_domains, merge_topk, search_distributed, RetrievalCache, RetrievalResult};
pub use subsample::{include, subsample_set, tail_bound, SubsampleSpec};
