//! Training runs across estimators, normalization schemes and seeds.

use std::path::{Path, PathBuf};

use amp_core::approximator::{write_mlp, write_value_net, NormalizationScheme};
use amp_core::estimators::EstimatorMode;
use amp_core::ppo::{train, IterationRecord, MqnTask, PpoConfig, RideTask, Task};
use anyhow::{Context, Result};

use crate::config::{EnvSpec, ExperimentConfig};
use crate::output::{
    clear_markers, create_dir, write_aggregate, write_atomic, write_marker, CurveWriter, Manifest, DIVERGED, FAILED,
};
use crate::stats::aggregate_curves;
use crate::timing::{timing_report, write_report, TimingRecord, TimingWriter};

/// Directory name of one estimator and normalization combination.
pub fn run_label(mode: EstimatorMode, norm: NormalizationScheme) -> String {
    format!("{}__{}", mode.label(), norm.label())
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub label: String,
    pub estimator: EstimatorMode,
    pub normalization: NormalizationScheme,
    pub curves: Vec<(u64, Vec<IterationRecord>)>,
    /// Seeds whose training diverged, with the diagnostic.
    pub diverged: Vec<(u64, String)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub dir: PathBuf,
    pub runs: Vec<RunResult>,
    pub warnings: Vec<String>,
}

/// Train every (estimator, normalization, seed) combination and write the
/// artifacts under `cfg.out`:
///
/// ```text
/// manifest.json  timing.csv  timing_report.csv
/// <estimator>__<normalization>/
///     curves.csv  seed_<s>.csv  aggregate.csv  aggregate_value_loss.csv
///     checkpoints/seed_<s>/{policy,value}.ckpt
/// ```
///
/// A diverging seed leaves a `DIVERGED` marker and the other runs go on;
/// any other error leaves `FAILED` markers and stops the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    match &cfg.env {
        EnvSpec::Mqn(spec) => {
            let env = spec.resolve()?;
            let resolved = serde_json::to_value(&env)?;
            run_all(&MqnTask { cfg: env }, cfg, resolved)
        }
        EnvSpec::RideHail(spec) => {
            let env = spec.resolve()?;
            let resolved = serde_json::to_value(&env)?;
            run_all(&RideTask { cfg: env }, cfg, resolved)
        }
    }
}

fn io_error(e: anyhow::Error) -> amp_core::Error {
    amp_core::Error::Io(std::io::Error::other(format!("{e:#}")))
}

fn checkpoint(dir: &Path, it: usize, head: &amp_core::PolicyHead64, value: &amp_core::ValueNet64) -> Result<()> {
    let mut p = Vec::new();
    write_mlp(&mut p, &head.net)?;
    write_atomic(&dir.join("policy.ckpt"), &p)?;
    let mut v = Vec::new();
    write_value_net(&mut v, value)?;
    write_atomic(&dir.join("value.ckpt"), &v)?;
    write_atomic(&dir.join("iteration"), format!("{it}\n").as_bytes())
}

fn run_all<K: Task>(task: &K, cfg: &ExperimentConfig, resolved_env: serde_json::Value) -> Result<ExperimentSummary> {
    let dir = create_dir(&cfg.out)?;
    clear_markers(&dir)?;
    let mut manifest = Manifest::new("train", serde_json::to_value(cfg)?, resolved_env);
    let combos: Vec<(EstimatorMode, NormalizationScheme)> =
        cfg.estimators.iter().flat_map(|&m| cfg.normalizations.iter().map(move |&n| (m, n))).collect();
    manifest.runs = combos.iter().map(|&(m, n)| run_label(m, n)).collect();
    manifest.write(&dir)?;

    let mut timing = TimingWriter::create(&dir.join("timing.csv"))?;
    let mut timing_rows: Vec<TimingRecord> = Vec::new();
    let mut runs = Vec::new();
    for &(mode, norm) in &combos {
        let label = run_label(mode, norm);
        let rdir = create_dir(&dir.join(&label))?;
        clear_markers(&rdir)?;
        let mut all = CurveWriter::create(&rdir.join("curves.csv"))?;
        let mut result = RunResult {
            label: label.clone(),
            estimator: mode,
            normalization: norm,
            curves: Vec::new(),
            diverged: Vec::new(),
        };
        for &seed in &cfg.seeds {
            let mut per = CurveWriter::create(&rdir.join(format!("seed_{seed}.csv")))?;
            let ckdir = create_dir(&rdir.join("checkpoints").join(format!("seed_{seed}")))?;
            let ppo = PpoConfig { estimator: mode, normalization: norm, seed, ..cfg.ppo.clone() };
            let mut records = Vec::new();
            let outcome = train(task, &ppo, |rec, head, value| {
                all.append(seed, rec).map_err(io_error)?;
                per.append(seed, rec).map_err(io_error)?;
                timing.append(&mode.label(), norm.label(), seed, rec).map_err(io_error)?;
                checkpoint(&ckdir, rec.iteration, head, value).map_err(io_error)?;
                timing_rows.push(TimingRecord {
                    mode: mode.label(),
                    normalization: norm.label().into(),
                    seed,
                    iteration: rec.iteration,
                    sim_s: rec.sim_s,
                    prep_s: rec.prep_s,
                    train_s: rec.train_s,
                    total_s: rec.total_s,
                });
                records.push(rec.clone());
                Ok(())
            });
            match outcome {
                Ok(_) => {}
                Err(amp_core::Error::Divergence(msg)) => {
                    let line = format!("{label} seed {seed}: {msg}");
                    write_marker(&rdir, DIVERGED, &line)?;
                    eprintln!("warning: {line}");
                    manifest.warnings.push(line);
                    result.diverged.push((seed, msg));
                }
                Err(e) => {
                    let line = format!("{label} seed {seed}: {e}");
                    write_marker(&rdir, FAILED, &line)?;
                    write_marker(&dir, FAILED, &line)?;
                    manifest.status = "failed".into();
                    manifest.write(&dir)?;
                    return Err(e).with_context(|| format!("{label}, seed {seed}"));
                }
            }
            result.curves.push((seed, records));
        }
        let pick = |f: fn(&IterationRecord) -> f64| -> Vec<(u64, Vec<f64>)> {
            result.curves.iter().map(|(s, c)| (*s, c.iter().map(f).collect())).collect()
        };
        let metric = aggregate_curves(&pick(|r| r.metric));
        let loss = aggregate_curves(&pick(|r| r.value_loss));
        write_aggregate(&rdir.join("aggregate.csv"), &metric.rows)?;
        write_aggregate(&rdir.join("aggregate_value_loss.csv"), &loss.rows)?;
        if let Some(w) = metric.warning {
            let line = format!("{label}: {w}");
            eprintln!("warning: {line}");
            manifest.warnings.push(line);
        }
        runs.push(result);
    }
    write_report(&dir.join("timing_report.csv"), &timing_report(&timing_rows))?;
    manifest.status =
        if runs.iter().any(|r| !r.diverged.is_empty()) { "complete_with_divergence" } else { "complete" }.into();
    manifest.write(&dir)?;
    Ok(ExperimentSummary { dir, runs, warnings: manifest.warnings })
}
