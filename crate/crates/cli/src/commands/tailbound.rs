use anyhow::Result;
use clap::Args;

use trove_core::subsample::tail_bound;

use crate::commands::parse_list;

#[derive(Args)]
pub struct TailboundArgs {
    /// Pool size K (number of Bernoulli trials).
    #[arg(long)]
    pub retrieve_k: u64,
    /// Subsampling ratios, comma separated.
    #[arg(long)]
    pub p: String,
    /// Required number of survivors m.
    #[arg(long, default_value_t = 3)]
    pub m: u64,
}

/// Print `P(Binomial(K, p) >= m)` for each ratio, one line per ratio.
pub fn run(args: TailboundArgs) -> Result<()> {
    let ratios: Vec<f64> = parse_list(&args.p, "ratio")?;
    for &p in &ratios {
        if !(0.0..=1.0).contains(&p) {
            return Err(trove_core::Error::Config {
                field: "p".into(),
                msg: format!("ratio {p} outside [0, 1]"),
            }
            .into());
        }
        println!(
            "K={} p={} m={} tail_bound={:.6}",
            args.retrieve_k,
            p,
            args.m,
            tail_bound(args.retrieve_k, p, args.m)
        );
    }
    Ok(())
}
