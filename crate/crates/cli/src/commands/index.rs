use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use trove_core::flat_index::{load_index, manifest_path, read_manifest};

use crate::manifest::{manifest_path_for, now_ms, RunManifest};

#[derive(Args)]
pub struct IndexArgs {
    /// Directory of .emb files written by `trove embed`.
    #[arg(long)]
    pub emb_dir: PathBuf,
}

/// Flat indices need no construction beyond the embeddings themselves;
/// indexing verifies each payload against its sidecar manifest (checksum,
/// shape, id uniqueness) and writes a `.idx.json` marker with the same
/// manifest content. A corrupt or truncated payload fails the checksum.
pub fn run(args: IndexArgs) -> Result<()> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.emb_dir)
        .with_context(|| format!("reading {}", args.emb_dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "emb"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        anyhow::bail!("no .emb files found under {}", args.emb_dir.display());
    }

    let mut manifest = RunManifest::new(
        "index",
        serde_json::json!({ "emb_dir": args.emb_dir }),
    );
    let started = now_ms();
    let mut rows_total = 0u64;
    for path in &paths {
        let index = load_index(path).with_context(|| format!("indexing {}", path.display()))?;
        rows_total += index.rows() as u64;
        let sidecar = read_manifest(&manifest_path(path))?;
        let marker = path.with_extension("idx.json");
        std::fs::write(&marker, serde_json::to_string_pretty(&sidecar)?)?;
        manifest.record_input(path)?;
    }
    manifest.record_stage("verify", started, rows_total);
    manifest.record_fact("indices", paths.len());
    manifest.write(&manifest_path_for(&args.emb_dir.join("index")))?;
    eprintln!("verified {} shard indices ({rows_total} rows)", paths.len());
    Ok(())
}
