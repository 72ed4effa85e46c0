//! CSV tables, JSON documents and the run manifest.

use crate::config::RunConfig;
use crate::CliError;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

/// Shortest representation that round-trips, so equal values always print
/// identically.
pub fn fmt(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

/// Median of the finite values; NaN when there are none.
pub fn median(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = xs.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub path: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(path: impl Into<String>, header: &[&str]) -> Table {
        Table { path: path.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.path);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header).map_err(runtime)?;
        for r in &self.rows {
            w.write_record(r).map_err(runtime)?;
        }
        w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Default)]
pub struct Output {
    pub tables: Vec<Table>,
    pub json: Vec<(String, Value)>,
    pub notes: Vec<String>,
}

impl Output {
    pub fn table(&self, path: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.path == path)
    }
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub versions: Value,
    pub wall_time: f64,
    pub files: Vec<FileEntry>,
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileEntry, CliError> {
    let path: PathBuf = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(FileEntry { path: name.to_string(), bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(bytes)) })
}

/// Writes every table and document under `dir`, then `manifest.json`.
pub fn write_output(dir: &Path, command: &str, cfg: &RunConfig, out: &Output, wall_time: f64) -> Result<Manifest, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for t in &out.tables {
        files.push(write_file(dir, &t.path, &t.to_csv()?)?);
    }
    for (name, v) in &out.json {
        let mut text = acn_core::net::canonical_json(v).map_err(runtime)?;
        text.push('\n');
        files.push(write_file(dir, name, text.as_bytes())?);
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        command: command.to_string(),
        config_hash: cfg.hash(),
        config: serde_json::from_str(&cfg.canonical()).map_err(runtime)?,
        seeds: cfg.seeds.clone(),
        versions: serde_json::json!({"acnlab": env!("CARGO_PKG_VERSION"), "acn-core": acn_core::VERSION}),
        wall_time,
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    fs::write(dir.join("manifest.json"), text + "\n").map_err(runtime)?;
    Ok(manifest)
}
