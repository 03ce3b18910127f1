use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use trove_core::flops::{
    flops_datastore, flops_pretrain, pareto_mask, MetricDirection, ParetoPoint,
};

#[derive(Args)]
pub struct FlopsArgs {
    /// Input CSV with header n_lm,d_pretrain,n_retriever,d_datastore,metric[,tag].
    #[arg(long)]
    pub input: PathBuf,
    /// Output CSV, input columns plus flops_pretrain,flops_datastore,total_flops,pareto.
    #[arg(long)]
    pub out: PathBuf,
    /// Whether larger metric values are better.
    #[arg(long, default_value = "higher", value_parser = ["higher", "lower"])]
    pub metric_dir: String,
}

pub fn run(args: FlopsArgs) -> Result<()> {
    let direction = match args.metric_dir.as_str() {
        "lower" => MetricDirection::LowerBetter,
        _ => MetricDirection::HigherBetter,
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(&args.input)
        .with_context(|| format!("opening {}", args.input.display()))?;
    let headers = reader.headers()?.clone();
    let expected = ["n_lm", "d_pretrain", "n_retriever", "d_datastore", "metric"];
    for (i, name) in expected.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*name) {
            return Err(trove_core::Error::Config {
                field: "input".into(),
                msg: format!(
                    "column {i} must be `{name}`, got `{}`",
                    headers.get(i).unwrap_or("<missing>")
                ),
            }
            .into());
        }
    }

    let mut rows: Vec<(u64, u64, u64, u64, f64, String)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize| -> Result<&str> {
            record.get(i).map(str::trim).ok_or_else(|| {
                trove_core::Error::Parse {
                    path: args.input.display().to_string(),
                    line: line + 2,
                    msg: format!("missing column {i}"),
                }
                .into()
            })
        };
        let int = |i: usize| -> Result<u64> {
            let raw = field(i)?;
            raw.parse().map_err(|_| {
                trove_core::Error::Parse {
                    path: args.input.display().to_string(),
                    line: line + 2,
                    msg: format!("`{raw}` is not a non-negative integer"),
                }
                .into()
            })
        };
        let metric: f64 = field(4)?.parse().map_err(|_| trove_core::Error::Parse {
            path: args.input.display().to_string(),
            line: line + 2,
            msg: format!("`{}` is not a float", record.get(4).unwrap_or("")),
        })?;
        if !metric.is_finite() {
            return Err(trove_core::Error::Parse {
                path: args.input.display().to_string(),
                line: line + 2,
                msg: "metric must be finite".into(),
            }
            .into());
        }
        let tag = record.get(5).unwrap_or("").trim().to_string();
        rows.push((int(0)?, int(1)?, int(2)?, int(3)?, metric, tag));
    }

    let points: Vec<ParetoPoint> = rows
        .iter()
        .map(|&(n_lm, d_pre, n_ret, d_ds, metric, ref tag)| ParetoPoint {
            flops: flops_pretrain(n_lm, d_pre) + flops_datastore(n_ret, d_ds),
            metric,
            tag: tag.clone(),
        })
        .collect();
    let mask = pareto_mask(&points, direction);

    let mut writer = csv::Writer::from_path(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    writer.write_record([
        "n_lm",
        "d_pretrain",
        "n_retriever",
        "d_datastore",
        "metric",
        "tag",
        "flops_pretrain",
        "flops_datastore",
        "total_flops",
        "pareto",
    ])?;
    for (row, (point, on_frontier)) in rows.iter().zip(points.iter().zip(&mask)) {
        writer.write_record([
            row.0.to_string(),
            row.1.to_string(),
            row.2.to_string(),
            row.3.to_string(),
            row.4.to_string(),
            row.5.clone(),
            flops_pretrain(row.0, row.1).to_string(),
            flops_datastore(row.2, row.3).to_string(),
            point.flops.to_string(),
            on_frontier.to_string(),
        ])?;
    }
    writer.flush()?;
    eprintln!(
        "annotated {} rows ({} on the frontier)",
        rows.len(),
        mask.iter().filter(|&&m| m).count()
    );
    Ok(())
}
