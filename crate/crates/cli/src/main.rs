//! `trove` — build, search, filter, subsample, and account for retrieval
//! datastores from the command line.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data-integrity error.

mod commands;
mod manifest;

use clap::Parser;

#[derive(Parser)]
#[command(name = "trove", version, about = "Datastore scaling toolkit for retrieval experiments")]
#[allow(clippy::large_enum_variant)]
enum Cli {
    /// Chunk raw documents into fixed-size passages and assign shards.
    Chunk(commands::chunk::ChunkArgs),
    /// Embed passages per shard into binary embedding files.
    Embed(commands::embed::EmbedArgs),
    /// Verify embedding files against their manifests and mark them indexed.
    Index(commands::index::IndexArgs),
    /// Exact top-K search across shard indices.
    Search(commands::search::SearchArgs),
    /// Run the retrieval pipeline over a (ratio, seed) grid.
    Pipeline(commands::pipeline::PipelineArgs),
    /// Aggregate pipeline bundles into a per-(ratio, seed) CSV.
    Sweep(commands::sweep::SweepArgs),
    /// Annotate a (params, tokens, metric) CSV with FLOPs and the Pareto frontier.
    Flops(commands::flops::FlopsArgs),
    /// Print exact binomial tail bounds P(Bin(K, p) >= m).
    Tailbound(commands::tailbound::TailboundArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap would exit(2) on usage errors; 2 is reserved for data
            // integrity here, so route usage problems to 1
            let is_help = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            std::process::exit(if is_help { 0 } else { 1 });
        }
    };
    let result = match cli {
        Cli::Chunk(args) => commands::chunk::run(args),
        Cli::Embed(args) => commands::embed::run(args),
        Cli::Index(args) => commands::index::run(args),
        Cli::Search(args) => commands::search::run(args),
        Cli::Pipeline(args) => commands::pipeline::run(args),
        Cli::Sweep(args) => commands::sweep::run(args),
        Cli::Flops(args) => commands::flops::run(args),
        Cli::Tailbound(args) => commands::tailbound::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(commands::exit_code(&err));
    }
}
