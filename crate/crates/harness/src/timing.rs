//! Per-phase wall-time tables.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use amp_core::ppo::IterationRecord;
use amp_core::stats::fmt17;
use anyhow::{Context, Result};
use serde::Deserialize;

pub const TIMING_HEADER: [&str; 8] =
    ["mode", "normalization", "seed", "iteration", "sim_s", "prep_s", "train_s", "total_s"];
pub const REPORT_HEADER: [&str; 5] =
    ["mode", "simulation_min", "data_preprocessing_min", "nn_training_min", "total_min"];

/// Phase durations of one iteration, in seconds.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TimingRecord {
    pub mode: String,
    pub normalization: String,
    pub seed: u64,
    pub iteration: usize,
    pub sim_s: f64,
    pub prep_s: f64,
    pub train_s: f64,
    pub total_s: f64,
}

/// Mean minutes per iteration for one estimator mode. `total` is the sum
/// of the three phases.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub mode: String,
    pub simulation: f64,
    pub preprocessing: f64,
    pub training: f64,
    pub total: f64,
    pub iterations: usize,
}

pub fn timing_report(records: &[TimingRecord]) -> Vec<TimingRow> {
    let mut rows: Vec<TimingRow> = Vec::new();
    for r in records {
        let row = match rows.iter().position(|x| x.mode == r.mode) {
            Some(i) => &mut rows[i],
            None => {
                rows.push(TimingRow {
                    mode: r.mode.clone(),
                    simulation: 0.0,
                    preprocessing: 0.0,
                    training: 0.0,
                    total: 0.0,
                    iterations: 0,
                });
                rows.last_mut().expect("just pushed")
            }
        };
        row.simulation += r.sim_s / 60.0;
        row.preprocessing += r.prep_s / 60.0;
        row.training += r.train_s / 60.0;
        row.iterations += 1;
    }
    for row in &mut rows {
        let n = row.iterations as f64;
        row.simulation /= n;
        row.preprocessing /= n;
        row.training /= n;
        row.total = row.simulation + row.preprocessing + row.training;
    }
    rows
}

pub struct TimingWriter {
    inner: csv::Writer<File>,
}

impl TimingWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        inner.write_record(TIMING_HEADER)?;
        inner.flush()?;
        Ok(TimingWriter { inner })
    }

    pub fn append(&mut self, mode: &str, normalization: &str, seed: u64, r: &IterationRecord) -> Result<()> {
        self.inner.write_record([
            mode.to_string(),
            normalization.to_string(),
            seed.to_string(),
            r.iteration.to_string(),
            fmt17(r.sim_s),
            fmt17(r.prep_s),
            fmt17(r.train_s),
            fmt17(r.total_s),
        ])?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_timing(path: &Path) -> Result<Vec<TimingRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().map(|row| row.with_context(|| format!("parsing {}", path.display()))).collect()
}

pub fn write_report(path: &Path, rows: &[TimingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.mode.clone(),
            fmt17(r.simulation),
            fmt17(r.preprocessing),
            fmt17(r.training),
            fmt17(r.total),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width rendering for the terminal.
pub fn render(rows: &[TimingRow]) -> String {
    let mut s = format!(
        "{:<24} {:>12} {:>20} {:>12} {:>12}\n",
        "Mode", "Simulation", "Data Preprocessing", "NN Training", "Total"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<24} {:>12.4} {:>20.4} {:>12.4} {:>12.4}",
            r.mode, r.simulation, r.preprocessing, r.training, r.total
        );
    }
    s.push_str("(minutes per iteration)\n");
    s
}

/// Re-render `timing_report.csv` from the `timing.csv` of a run directory.
pub fn rerender(dir: &Path) -> Result<Vec<TimingRow>> {
    let records = read_timing(&dir.join("timing.csv"))?;
    let rows = timing_report(&records);
    write_report(&dir.join("timing_report.csv"), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(mode: &str, sim: f64, prep: f64, train: f64) -> TimingRecord {
        TimingRecord {
            mode: mode.into(),
            normalization: "input_only".into(),
            seed: 1,
            iteration: 1,
            sim_s: sim,
            prep_s: prep,
            train_s: train,
            total_s: sim + prep + train,
        }
    }

    #[test]
    fn one_record_in_minutes() {
        let rows = timing_report(&[rec("plain_mc", 60.0, 120.0, 180.0)]);
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].simulation, rows[0].preprocessing, rows[0].training), (1.0, 2.0, 3.0));
        assert_eq!(rows[0].total, 6.0);
    }

    #[test]
    fn modes_are_averaged_separately_in_first_seen_order() {
        let rows = timing_report(&[rec("b", 60.0, 0.0, 0.0), rec("a", 6.0, 0.0, 0.0), rec("b", 120.0, 0.0, 0.0)]);
        assert_eq!(rows.iter().map(|r| r.mode.as_str()).collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(rows[0].simulation, 1.5);
        assert_eq!(rows[0].iterations, 2);
    }

    #[test]
    fn report_csv_has_fixed_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_report(&path, &timing_report(&[rec("plain_mc", 60.0, 60.0, 60.0)])).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("mode,simulation_min,data_preprocessing_min,nn_training_min,total_min\n"));
    }
}
