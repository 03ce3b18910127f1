use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use trove_core::pipeline::read_bundles_jsonl;

#[derive(Args)]
pub struct SweepArgs {
    /// Bundle JSONL written by `trove pipeline`.
    #[arg(long)]
    pub bundles: PathBuf,
    /// The pipeline run manifest (source of the raw token count).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

/// One row per (ratio, seed): the plotted datastore size (raw tokens
/// times p — the filtered-pool size is unknown by construction, so the
/// x value is proportionally larger), the domain histogram of top-1
/// documents, the mean top-1 score, and the fallback rate.
pub fn run(args: SweepArgs) -> Result<()> {
    let bundles = {
        let reader = BufReader::new(
            File::open(&args.bundles)
                .with_context(|| format!("opening {}", args.bundles.display()))?,
        );
        read_bundles_jsonl(reader, &args.bundles.display().to_string())?
    };
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&args.manifest)
            .with_context(|| format!("reading {}", args.manifest.display()))?,
    )?;
    let raw_tokens = manifest
        .pointer("/facts/raw_tokens")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| trove_core::Error::Corrupt {
            path: args.manifest.display().to_string(),
            msg: "manifest has no facts.raw_tokens".into(),
        })?;

    #[derive(Default)]
    struct Group {
        histogram: BTreeMap<String, u64>,
        top1_scores: Vec<f64>,
        bundles: u64,
        fallbacks: u64,
    }
    let mut groups: BTreeMap<(u64, u64), Group> = BTreeMap::new();
    for bundle in &bundles {
        let group = groups.entry((bundle.p.to_bits(), bundle.seed)).or_default();
        group.bundles += 1;
        if bundle.fallback {
            group.fallbacks += 1;
        }
        match bundle.docs.first() {
            Some(doc) => {
                *group.histogram.entry(doc.domain.clone()).or_default() += 1;
                group.top1_scores.push(doc.score);
            }
            None => *group.histogram.entry("none".into()).or_default() += 1,
        }
    }

    let mut writer = csv::Writer::from_path(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    writer.write_record([
        "p",
        "seed",
        "datastore_tokens",
        "domain_top1_histogram",
        "mean_top1_score",
        "fallback_rate",
    ])?;
    let mut keys: Vec<(u64, u64)> = groups.keys().copied().collect();
    keys.sort_by(|a, b| {
        f64::from_bits(a.0)
            .total_cmp(&f64::from_bits(b.0))
            .then(a.1.cmp(&b.1))
    });
    for key in keys {
        let group = &groups[&key];
        let p = f64::from_bits(key.0);
        let histogram = group
            .histogram
            .iter()
            .map(|(domain, count)| format!("{domain}={count}"))
            .collect::<Vec<_>>()
            .join(";");
        let mean_top1 = if group.top1_scores.is_empty() {
            String::new()
        } else {
            format!(
                "{}",
                group.top1_scores.iter().sum::<f64>() / group.top1_scores.len() as f64
            )
        };
        writer.write_record([
            format!("{p}"),
            format!("{}", key.1),
            format!("{}", raw_tokens as f64 * p),
            histogram,
            mean_top1,
            format!("{}", group.fallbacks as f64 / group.bundles.max(1) as f64),
        ])?;
    }
    writer.flush()?;
    eprintln!("wrote {} sweep rows to {}", groups.len(), args.out.display());
    Ok(())
}
