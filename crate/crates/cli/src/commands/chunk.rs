use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use trove_core::corpus::{
    assign_shards, chunk_corpus, read_documents_jsonl, write_passages_jsonl, ShardingPlan,
    DEFAULT_MAX_WORDS,
};

use crate::manifest::{manifest_path_for, now_ms, RunManifest};

#[derive(Args)]
pub struct ChunkArgs {
    /// Input corpus: JSONL with {"id", "domain", "text"} per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Output passages: JSONL with {"pid", "domain", "shard", "text", "wc"}.
    #[arg(long)]
    pub output: PathBuf,
    /// Maximum words per passage.
    #[arg(long, default_value_t = DEFAULT_MAX_WORDS)]
    pub max_words: usize,
    /// Shards per domain: either a single count ("8") or a per-domain
    /// list ("web=32,books=8"); per-domain lists reject unlisted domains.
    #[arg(long, default_value = "1")]
    pub shards: String,
}

pub fn parse_plan(spec: &str) -> Result<ShardingPlan> {
    if let Ok(m) = spec.trim().parse::<u32>() {
        return Ok(ShardingPlan::uniform(m)?);
    }
    let mut counts = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (domain, count) = part.split_once('=').ok_or_else(|| {
            anyhow::anyhow!("bad --shards entry `{part}`: expected `domain=count`")
        })?;
        let count: u32 = count
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("bad shard count in `{part}`"))?;
        counts.insert(domain.trim().to_string(), count);
    }
    if counts.is_empty() {
        anyhow::bail!("--shards `{spec}` names no domains");
    }
    Ok(ShardingPlan::per_domain(counts)?)
}

pub fn run(args: ChunkArgs) -> Result<()> {
    if args.max_words == 0 {
        return Err(trove_core::Error::Config {
            field: "max_words".into(),
            msg: "must be >= 1".into(),
        }
        .into());
    }
    let plan = parse_plan(&args.shards)?;
    let mut manifest = RunManifest::new(
        "chunk",
        serde_json::json!({
            "input": args.input,
            "output": args.output,
            "max_words": args.max_words,
            "shards": args.shards,
        }),
    );
    manifest.record_input(&args.input)?;

    let started = now_ms();
    let reader = BufReader::new(
        File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?,
    );
    let docs = read_documents_jsonl(reader, &args.input.display().to_string())?;
    let passages = assign_shards(&chunk_corpus(&docs, args.max_words), &plan)?;
    manifest.record_stage("chunk", started, passages.len() as u64);

    let writer = BufWriter::new(
        File::create(&args.output)
            .with_context(|| format!("creating {}", args.output.display()))?,
    );
    write_passages_jsonl(writer, &passages)?;
    manifest.record_fact("documents", docs.len());
    manifest.record_fact("passages", passages.len());
    manifest.record_fact(
        "total_words",
        passages.iter().map(|p| u64::from(p.word_count)).sum::<u64>(),
    );
    manifest.write(&manifest_path_for(&args.output))?;
    eprintln!("chunked {} documents into {} passages", docs.len(), passages.len());
    Ok(())
}
