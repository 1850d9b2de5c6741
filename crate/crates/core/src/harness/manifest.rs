use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha1::{Digest, Sha1};

use crate::data::write_atomic;
use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "SWP_THREADS";

/// Size the global rayon pool from `SWP_THREADS` (unset or 0 = one thread
/// per core). Returns the thread count in effect.
pub fn configure_threads() -> Result<usize> {
    let requested = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
        _ => 0,
    };
    // a second call (tests, library users) keeps the existing pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(requested)
        .build_global();
    Ok(rayon::current_num_threads())
}

/// Git's blob object id: sha1 of `"blob <len>\0" ++ bytes`.
pub fn git_blob_sha1(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(git_blob_sha1(&std::fs::read(path)?))
}

/// Run record: the effective configuration and content hashes of every
/// input and output file. No timestamps, so reruns produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Command-specific results (chosen p, accuracy, ...).
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub results: Value,
}

impl Manifest {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            command: command.to_owned(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            results: Value::Null,
        }
    }

    pub fn add_input(&mut self, label: &str, path: &Path) -> Result<()> {
        self.inputs.insert(label.to_owned(), hash_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, label: &str, bytes: &[u8]) {
        self.outputs.insert(label.to_owned(), git_blob_sha1(bytes));
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}
