//! Files: WAV audio, versioned parameter files, result CSVs and run
//! manifests.

mod params;
mod wav;

pub use params::{load_params, params_from_json, params_to_json, save_params, ParamsFile, ParamsMeta, PARAMS_FORMAT_VERSION};
pub use wav::{read_wav, write_wav, Audio};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::{MultiSeedResult, RunStats};

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Parse { field: "csv".into(), msg: e.to_string() }
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `iteration,loss`
pub fn write_loss_history(path: &Path, history: &[f64]) -> Result<()> {
    write_rows(path, &["iteration", "loss"], history.iter().enumerate().map(|(i, l)| vec![i.to_string(), l.to_string()]))
}

/// Any numeric series as `index,<name>`.
pub fn write_series(path: &Path, name: &str, values: &[f64]) -> Result<()> {
    write_rows(path, &["index", name], values.iter().enumerate().map(|(i, v)| vec![i.to_string(), v.to_string()]))
}

/// Per-seed rows `seed,esr_db,mrsl,alignment`; failed seeds are listed
/// with empty metric fields.
pub fn write_seed_table(path: &Path, result: &MultiSeedResult) -> Result<()> {
    let mut rows: Vec<(u64, Vec<String>)> = result
        .runs
        .iter()
        .map(|r| {
            let m = &r.metrics;
            (
                r.seed,
                vec![
                    r.seed.to_string(),
                    m.esr_db.to_string(),
                    m.mrsl.to_string(),
                    m.alignment.map(|a| a.to_string()).unwrap_or_default(),
                    String::new(),
                ],
            )
        })
        .chain(
            result
                .stats
                .failures
                .iter()
                .map(|f| (f.seed, vec![f.seed.to_string(), String::new(), String::new(), String::new(), f.error.clone()])),
        )
        .collect();
    rows.sort_by_key(|r| r.0);
    write_rows(path, &["seed", "esr_db", "mrsl", "alignment", "error"], rows.into_iter().map(|r| r.1))
}

/// One row `n_res,median,best,ci,failures`.
pub fn write_stats_summary(path: &Path, stats: &RunStats) -> Result<()> {
    write_rows(
        path,
        &["n_res", "median_esr_db", "best_esr_db", "ci", "failures"],
        [vec![
            stats.esr_db.len().to_string(),
            stats.median.to_string(),
            stats.best.to_string(),
            stats.ci.to_string(),
            stats.failures.len().to_string(),
        ]],
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse { field: "json".into(), msg: e.to_string() })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Record of one successful command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<PathBuf>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config,
            seeds: Vec::new(),
            artifacts: Vec::new(),
            started_unix: unix_now(),
            finished_unix: 0,
        }
    }

    /// Stamps the finish time and writes the manifest. Fails if any listed
    /// artifact is missing.
    pub fn finish(mut self, path: &Path) -> Result<PathBuf> {
        if let Some(missing) = self.artifacts.iter().find(|p| !p.exists()) {
            return Err(Error::io(missing, std::io::Error::new(std::io::ErrorKind::NotFound, "artifact missing")));
        }
        self.finished_unix = unix_now();
        write_json(path, &self)?;
        Ok(path.to_path_buf())
    }
}
