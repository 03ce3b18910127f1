pub mod chunk;
pub mod embed;
pub mod flops;
pub mod index;
pub mod pipeline;
pub mod search;
pub mod sweep;
pub mod tailbound;

use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use trove_core::flat_index::{load_index, ShardIndex};
use trove_core::Error as CoreError;

/// 1 for usage/config problems (including missing inputs), 2 for damaged
/// or inconsistent data.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        return match core {
            CoreError::Io(io) if io.kind() == ErrorKind::NotFound => 1,
            e if e.is_config() => 1,
            _ => 2,
        };
    }
    if let Some(io) = err.downcast_ref::<std::io::Error>() {
        return if io.kind() == ErrorKind::NotFound { 1 } else { 2 };
    }
    2
}

/// Run `body` on a rayon pool with `jobs` workers (None = rayon default).
pub fn with_jobs<T: Send>(jobs: Option<usize>, body: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(body()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .context("building worker pool")?;
            Ok(pool.install(body))
        }
    }
}

/// Load every `*.emb` index (with its sidecar manifest) under a directory,
/// in deterministic path order.
pub fn load_indices(dir: &Path) -> Result<Vec<ShardIndex>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading index dir {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "emb"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        anyhow::bail!("no .emb files found under {}", dir.display());
    }
    paths
        .iter()
        .map(|p| load_index(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

/// Comma-separated list -> values.
pub fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| anyhow::anyhow!("invalid {what} value `{s}`: {e}"))
        })
        .collect()
}

/// File names for shard artifacts: the domain sanitized for the
/// filesystem (with a short hash suffix when sanitization changed it, so
/// distinct domains never collide) plus the shard number.
pub fn shard_file_stem(domain: &str, shard: u32) -> String {
    let sanitized: String = domain
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_' { c } else { '_' })
        .collect();
    if sanitized == domain {
        format!("{sanitized}-{shard:04}")
    } else {
        let tag = trove_core::hash::hash64(domain.as_bytes()) & 0xffff_ffff;
        format!("{sanitized}-{tag:08x}-{shard:04}")
    }
}
