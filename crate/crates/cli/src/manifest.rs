//! Run manifests: enough recorded state (config snapshot, input
//! checksums, version, timings) to reproduce a run or refuse a stale one.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use trove_core::hash::Hasher64;

#[derive(Debug, Serialize)]
pub struct StageStat {
    pub name: String,
    pub millis: u128,
    pub count: u64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    /// Input path -> hash64 of the file bytes, hex.
    pub inputs: BTreeMap<String, String>,
    /// Free-form run facts (e.g. raw corpus token counts).
    pub facts: BTreeMap<String, serde_json::Value>,
    pub stages: Vec<StageStat>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: "trove",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            inputs: BTreeMap::new(),
            facts: BTreeMap::new(),
            stages: Vec::new(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let checksum = hash_file(path)?;
        self.inputs.insert(path.display().to_string(), format!("{checksum:016x}"));
        Ok(())
    }

    pub fn record_fact(&mut self, key: &str, value: impl Serialize) {
        self.facts.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
    }

    pub fn record_stage(&mut self, name: &str, started_ms: u128, count: u64) {
        self.stages.push(StageStat {
            name: name.to_string(),
            millis: now_ms().saturating_sub(started_ms),
            count,
        });
    }

    pub fn write(mut self, path: &Path) -> Result<()> {
        self.finished_unix_ms = now_ms();
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, text)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }
}

pub fn hash_file(path: &Path) -> Result<u64> {
    let file =
        File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Hasher64::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finish())
}

/// `<path>.manifest.json` next to an output file or directory.
pub fn manifest_path_for(output: &Path) -> std::path::PathBuf {
    let mut os = output.as_os_str().to_os_string();
    os.push(".manifest.json");
    std::path::PathBuf::from(os)
}
