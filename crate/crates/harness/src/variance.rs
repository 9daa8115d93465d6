//! Target variance at fixed anchor states under a frozen policy.

use std::path::PathBuf;

use amp_core::env_mqn::{MqnAction, MqnConfig, MqnState, StaticPriority, UniformFeasible};
use amp_core::env_ridehail::{GreedyDispatch, UniformDispatch};
use amp_core::estimators::{mqn_estimator_variance, ride_estimator_variance, VarianceStudy, ZeroValue};
use amp_core::oracle::{exact_poisson_solution, optimal_average_cost, TablePolicy, TruncatedMqn};
use amp_core::policy::Policy;
use amp_core::stats::fmt17;
use anyhow::{Context, Result};

use crate::config::{EnvSpec, PolicySpec, VarianceConfig, ZetaSpec};
use crate::output::{clear_markers, create_dir, write_marker, Manifest, FAILED};

pub const VARIANCE_HEADER: [&str; 6] = ["mode", "L", "anchor", "mean", "variance", "episodes"];

/// Fixed MQN policy selected by a [`PolicySpec`].
#[derive(Debug, Clone)]
pub enum MqnPolicy {
    Static(StaticPriority),
    Uniform(UniformFeasible),
    Table(TablePolicy),
}

impl Policy<MqnState, MqnAction, f64> for MqnPolicy {
    fn distribution(&self, s: &MqnState) -> Vec<(MqnAction, f64)> {
        match self {
            MqnPolicy::Static(p) => p.distribution(s),
            MqnPolicy::Uniform(p) => p.distribution(s),
            MqnPolicy::Table(p) => p.distribution(s),
        }
    }
}

/// Build the MQN policy; `Optimal` solves the truncation at the config's cap.
pub fn mqn_policy(spec: PolicySpec, cfg: &MqnConfig) -> Result<MqnPolicy> {
    Ok(match spec {
        PolicySpec::Class1First => MqnPolicy::Static(StaticPriority::class1_first()),
        PolicySpec::Class2First => MqnPolicy::Static(StaticPriority::class2_first()),
        PolicySpec::Uniform => MqnPolicy::Uniform(UniformFeasible),
        PolicySpec::Optimal => {
            let cap = cfg.buffer_cap.context("optimal policy needs env.buffer_cap")?;
            MqnPolicy::Table(optimal_average_cost(&TruncatedMqn::new(cfg, cap)?)?.policy)
        }
        PolicySpec::Greedy => anyhow::bail!("greedy is a ride-hailing policy"),
    })
}

/// One CSV row per (mode, anchor).
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub mode: String,
    /// Sample size for `amp_sampled`, 0 otherwise.
    pub samples: usize,
    pub anchor: String,
    pub mean: f64,
    pub variance: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone)]
pub struct VarianceSummary {
    pub dir: PathBuf,
    pub rows: Vec<VarianceRow>,
    pub notes: Vec<String>,
}

fn rows_of<A: std::fmt::Display>(study: &VarianceStudy<A, f64>) -> Vec<VarianceRow> {
    study
        .reports
        .iter()
        .map(|r| VarianceRow {
            mode: study.mode.label(),
            samples: study.mode.samples(),
            anchor: r.anchor.to_string(),
            mean: r.mean,
            variance: r.variance,
            episodes: r.episodes,
        })
        .collect()
}

fn compute(cfg: &VarianceConfig) -> Result<(serde_json::Value, Vec<VarianceRow>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    match &cfg.env {
        EnvSpec::Mqn(spec) => {
            let env = spec.resolve()?;
            let policy = mqn_policy(cfg.policy, &env)?;
            let oracle = match (cfg.zeta, cfg.oracle_average_cost, env.buffer_cap) {
                (ZetaSpec::OracleH, _, Some(cap)) | (_, true, Some(cap)) => {
                    Some(exact_poisson_solution(&TruncatedMqn::new(&env, cap)?, &policy)?)
                }
                _ => None,
            };
            let avg = if cfg.oracle_average_cost { oracle.as_ref().map(|o| o.average_cost) } else { None };
            let anchors: Vec<MqnState> = cfg.anchors.iter().map(|a| MqnState::new(a[0], a[1], a[2])).collect();
            for mode in cfg.all_modes() {
                let study = match (cfg.zeta, &oracle) {
                    (ZetaSpec::OracleH, Some(h)) => {
                        mqn_estimator_variance(&env, &policy, h, mode, avg, &anchors, cfg.episodes, cfg.seed)
                    }
                    _ => mqn_estimator_variance(&env, &policy, &ZeroValue, mode, avg, &anchors, cfg.episodes, cfg.seed),
                }
                .with_context(|| format!("mode {}", mode.label()))?;
                rows.extend(rows_of(&study));
                notes.extend(study.notes.iter().map(|n| format!("{}: {n}", mode.label())));
            }
            Ok((serde_json::to_value(&env)?, rows, notes))
        }
        EnvSpec::RideHail(spec) => {
            let env = spec.resolve()?;
            let anchors: Vec<(u32, usize)> = cfg.anchors.iter().map(|a| (a[0], a[1] as usize)).collect();
            for mode in cfg.all_modes() {
                let study = match cfg.policy {
                    PolicySpec::Greedy => ride_estimator_variance(
                        &env,
                        &GreedyDispatch { cfg: env.clone() },
                        &ZeroValue,
                        mode,
                        &anchors,
                        cfg.episodes,
                        cfg.seed,
                    ),
                    _ => ride_estimator_variance(
                        &env,
                        &UniformDispatch { cfg: env.clone() },
                        &ZeroValue,
                        mode,
                        &anchors,
                        cfg.episodes,
                        cfg.seed,
                    ),
                }
                .with_context(|| format!("mode {}", mode.label()))?;
                rows.extend(rows_of(&study));
                notes.extend(study.notes.iter().map(|n| format!("{}: {n}", mode.label())));
            }
            Ok((serde_json::to_value(&env)?, rows, notes))
        }
    }
}

pub fn write_variance_csv(path: &std::path::Path, rows: &[VarianceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(VARIANCE_HEADER)?;
    for r in rows {
        w.write_record([
            r.mode.clone(),
            r.samples.to_string(),
            r.anchor.clone(),
            fmt17(r.mean),
            fmt17(r.variance),
            r.episodes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run the study and write `variance.csv` and the manifest under `cfg.out`.
pub fn run_variance(cfg: &VarianceConfig) -> Result<VarianceSummary> {
    cfg.validate()?;
    let dir = create_dir(&cfg.out)?;
    clear_markers(&dir)?;
    let mut manifest = Manifest::new("variance", serde_json::to_value(cfg)?, serde_json::Value::Null);
    manifest.write(&dir)?;
    match compute(cfg) {
        Ok((env, rows, notes)) => {
            write_variance_csv(&dir.join("variance.csv"), &rows)?;
            manifest.resolved_env = env;
            manifest.runs = cfg.all_modes().iter().map(|m| m.label()).collect();
            manifest.warnings = notes.clone();
            manifest.status = "complete".into();
            manifest.write(&dir)?;
            Ok(VarianceSummary { dir, rows, notes })
        }
        Err(e) => {
            write_marker(&dir, FAILED, &format!("{e:#}"))?;
            manifest.status = "failed".into();
            manifest.write(&dir)?;
            Err(e)
        }
    }
}
