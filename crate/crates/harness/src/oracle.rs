//! Exact average costs and relative values on a truncated MQN.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use amp_core::oracle::{exact_poisson_solution, optimal_average_cost, write_h_csv, write_policy_csv, TruncatedMqn};
use amp_core::stats::fmt17;
use anyhow::{Context, Result};

use crate::config::{OracleConfig, PolicySpec};
use crate::output::{clear_markers, create_dir, write_marker, Manifest, FAILED};
use crate::variance::mqn_policy;

pub const SUMMARY_HEADER: [&str; 4] = ["policy", "average_cost", "iterations", "span"];

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub policy: String,
    pub average_cost: f64,
    /// Value-iteration sweeps for the optimum, 0 for fixed policies.
    pub iterations: usize,
    pub span: f64,
}

#[derive(Debug, Clone)]
pub struct OracleSummary {
    pub dir: PathBuf,
    pub rows: Vec<OracleRow>,
}

pub fn policy_label(p: PolicySpec) -> &'static str {
    match p {
        PolicySpec::Class1First => "class1_first",
        PolicySpec::Class2First => "class2_first",
        PolicySpec::Uniform => "uniform",
        PolicySpec::Optimal => "optimal",
        PolicySpec::Greedy => "greedy",
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn compute(cfg: &OracleConfig, dir: &Path) -> Result<(serde_json::Value, Vec<OracleRow>)> {
    let env = cfg.env.resolve()?;
    let net = TruncatedMqn::new(&env, cfg.cap)?;
    let opt = optimal_average_cost(&net)?;
    write_h_csv(create(&dir.join("optimal_h.csv"))?, &net, &opt.h)?;
    write_policy_csv(create(&dir.join("optimal_policy.csv"))?, &net, &opt.policy)?;
    let mut rows = vec![OracleRow {
        policy: "optimal".into(),
        average_cost: opt.average_cost,
        iterations: opt.iterations,
        span: opt.span,
    }];
    for &spec in cfg.policies.iter().filter(|p| **p != PolicySpec::Optimal) {
        let policy = mqn_policy(spec, &net.env_config())?;
        let sol = exact_poisson_solution(&net, &policy).with_context(|| policy_label(spec))?;
        write_h_csv(create(&dir.join(format!("h_{}.csv", policy_label(spec))))?, &net, &sol.h)?;
        rows.push(OracleRow {
            policy: policy_label(spec).into(),
            average_cost: sol.average_cost,
            iterations: 0,
            span: 0.0,
        });
    }
    let mut w = csv::Writer::from_path(dir.join("oracle_summary.csv"))?;
    w.write_record(SUMMARY_HEADER)?;
    for r in &rows {
        w.write_record([r.policy.clone(), fmt17(r.average_cost), r.iterations.to_string(), fmt17(r.span)])?;
    }
    w.flush()?;
    Ok((serde_json::to_value(net.env_config())?, rows))
}

/// Solve the truncation at `cfg.cap` and write the tables under `cfg.out`.
pub fn run_oracle(cfg: &OracleConfig) -> Result<OracleSummary> {
    cfg.validate()?;
    let dir = create_dir(&cfg.out)?;
    clear_markers(&dir)?;
    let mut manifest = Manifest::new("oracle", serde_json::to_value(cfg)?, serde_json::Value::Null);
    manifest.write(&dir)?;
    match compute(cfg, &dir) {
        Ok((env, rows)) => {
            manifest.resolved_env = env;
            manifest.runs = rows.iter().map(|r| r.policy.clone()).collect();
            manifest.status = "complete".into();
            manifest.write(&dir)?;
            Ok(OracleSummary { dir, rows })
        }
        Err(e) => {
            write_marker(&dir, FAILED, &format!("{e:#}"))?;
            manifest.status = "failed".into();
            manifest.write(&dir)?;
            Err(e)
        }
    }
}
