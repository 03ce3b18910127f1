use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use trove_core::corpus::{read_passages_jsonl, Passage};
use trove_core::embedding::{embed_shard, EmbedderSpec, DEFAULT_DIM, REFERENCE_EMBEDDER};
use trove_core::flat_index::save_index;

use crate::commands::shard_file_stem;
use crate::manifest::{manifest_path_for, now_ms, RunManifest};

#[derive(Args)]
pub struct EmbedArgs {
    /// Passage JSONL produced by `trove chunk`.
    #[arg(long)]
    pub passages: PathBuf,
    /// Directory for the per-shard .emb files and sidecar manifests.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long, default_value = REFERENCE_EMBEDDER)]
    pub embedder: String,
}

pub fn run(args: EmbedArgs) -> Result<()> {
    let spec = EmbedderSpec::new(&args.embedder, args.dim)?;
    let mut manifest = RunManifest::new(
        "embed",
        serde_json::json!({
            "passages": args.passages,
            "out_dir": args.out_dir,
            "dim": args.dim,
            "embedder": args.embedder,
        }),
    );
    manifest.record_input(&args.passages)?;

    let reader = BufReader::new(
        File::open(&args.passages)
            .with_context(|| format!("opening {}", args.passages.display()))?,
    );
    let passages = read_passages_jsonl(reader, &args.passages.display().to_string())?;
    std::fs::create_dir_all(&args.out_dir)?;

    let mut groups: BTreeMap<(String, u32), Vec<Passage>> = BTreeMap::new();
    for passage in passages {
        groups
            .entry((passage.domain.clone(), passage.shard))
            .or_default()
            .push(passage);
    }

    let started = now_ms();
    let mut rows_total = 0u64;
    for ((domain, shard), group) in &groups {
        let payload = embed_shard(group, &spec);
        let path = args.out_dir.join(format!("{}.emb", shard_file_stem(domain, *shard)));
        let shard_manifest = save_index(&payload, &path)?;
        rows_total += shard_manifest.rows as u64;
        manifest.record_fact(
            &format!("shard:{domain}/{shard}"),
            serde_json::json!({ "rows": shard_manifest.rows, "checksum": shard_manifest.checksum }),
        );
    }
    manifest.record_stage("embed", started, rows_total);
    manifest.record_fact("shards", groups.len());
    manifest.write(&manifest_path_for(&args.out_dir))?;
    eprintln!("embedded {rows_total} passages into {} shard files", groups.len());
    Ok(())
}
