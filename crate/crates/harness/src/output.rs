//! Artifact files: manifests, failure markers and CSV writers.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use amp_core::ppo::IterationRecord;
use amp_core::stats::fmt17;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::stats::AggregateRow;

pub const MANIFEST: &str = "manifest.json";
pub const FAILED: &str = "FAILED";
pub const DIVERGED: &str = "DIVERGED";

pub fn code_version() -> String {
    format!("amp-harness {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub code_version: String,
    /// `running`, `complete`, `complete_with_divergence` or `failed`.
    pub status: String,
    /// The configuration with every default filled in.
    pub config: serde_json::Value,
    /// Environment parameters actually simulated.
    pub resolved_env: serde_json::Value,
    pub runs: Vec<String>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, resolved_env: serde_json::Value) -> Self {
        Manifest {
            command: command.into(),
            code_version: code_version(),
            status: "running".into(),
            config,
            resolved_env,
            runs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(MANIFEST), serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Write through a temporary file so readers never see a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))
}

pub fn write_marker(dir: &Path, name: &str, message: &str) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join(name))
        .with_context(|| format!("writing marker {name} in {}", dir.display()))?;
    writeln!(f, "{message}")?;
    Ok(())
}

pub fn clear_markers(dir: &Path) -> Result<()> {
    for name in [FAILED, DIVERGED] {
        let p = dir.join(name);
        if p.exists() {
            fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
        }
    }
    Ok(())
}

pub fn create_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

pub const CURVE_HEADER: [&str; 7] = ["seed", "iteration", "metric", "value_loss", "sim_s", "prep_s", "train_s"];
pub const AGGREGATE_HEADER: [&str; 4] = ["iteration", "mean", "ci_low", "ci_high"];

/// Learning-curve CSV flushed after every row.
pub struct CurveWriter {
    inner: csv::Writer<File>,
}

impl CurveWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        inner.write_record(CURVE_HEADER)?;
        inner.flush()?;
        Ok(CurveWriter { inner })
    }

    pub fn append(&mut self, seed: u64, r: &IterationRecord) -> Result<()> {
        self.inner.write_record([
            seed.to_string(),
            r.iteration.to_string(),
            fmt17(r.metric),
            fmt17(r.value_loss),
            fmt17(r.sim_s),
            fmt17(r.prep_s),
            fmt17(r.train_s),
        ])?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record([r.iteration.to_string(), fmt17(r.mean), fmt17(r.ci_low), fmt17(r.ci_high)])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a curves CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CurveRow {
    pub seed: u64,
    pub iteration: usize,
    pub metric: f64,
    pub value_loss: f64,
    pub sim_s: f64,
    pub prep_s: f64,
    pub train_s: f64,
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().map(|row| row.with_context(|| format!("parsing {}", path.display()))).collect()
}
