//! JSON experiment configuration. Every field has a default and unknown
//! keys are rejected.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use amp_core::approximator::NormalizationScheme;
use amp_core::env_mqn::{MqnConfig, Regime};
use amp_core::env_ridehail::RideHailConfig;
use amp_core::estimators::EstimatorMode;
use amp_core::ppo::PpoConfig;
use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MqnSpec {
    pub regime: Regime,
    pub episode_length: usize,
    pub buffer_cap: Option<u32>,
    /// Rate overrides; unset rates come from the regime.
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub mu3: Option<f64>,
}

impl Default for MqnSpec {
    fn default() -> Self {
        MqnSpec {
            regime: Regime::IL,
            episode_length: 1000,
            buffer_cap: None,
            lambda1: None,
            lambda2: None,
            mu1: None,
            mu2: None,
            mu3: None,
        }
    }
}

impl MqnSpec {
    pub fn resolve(&self) -> Result<MqnConfig> {
        let base = MqnConfig::for_regime(self.regime, self.episode_length);
        let cfg = MqnConfig {
            lambda1: self.lambda1.unwrap_or(base.lambda1),
            lambda2: self.lambda2.unwrap_or(base.lambda2),
            mu1: self.mu1.unwrap_or(base.mu1),
            mu2: self.mu2.unwrap_or(base.mu2),
            mu3: self.mu3.unwrap_or(base.mu3),
            buffer_cap: self.buffer_cap,
            ..base
        };
        cfg.validate().context("env")?;
        Ok(cfg)
    }
}

/// Origin-destination matrix given inline or as a headerless CSV file with
/// one row per origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matrix<T> {
    Inline(Vec<Vec<T>>),
    Csv(PathBuf),
}

impl<T: Clone + DeserializeOwned> Matrix<T> {
    pub fn load(&self) -> Result<Vec<Vec<T>>> {
        match self {
            Matrix::Inline(m) => Ok(m.clone()),
            Matrix::Csv(path) => {
                let mut r = csv::ReaderBuilder::new()
                    .has_headers(false)
                    .trim(csv::Trim::All)
                    .from_path(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                r.deserialize()
                    .collect::<std::result::Result<_, _>>()
                    .with_context(|| format!("parsing {}", path.display()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RideSpec {
    pub regions: usize,
    pub n_cars: usize,
    pub horizon: u32,
    /// Poisson rate of every origin-destination pair unless `arrival_rates`
    /// is given.
    pub rate: f64,
    pub arrival_rates: Option<Matrix<f64>>,
    pub travel_time: Option<Matrix<u32>>,
    pub patience: u32,
}

impl Default for RideSpec {
    fn default() -> Self {
        let d = RideHailConfig::default();
        RideSpec {
            regions: d.regions,
            n_cars: d.n_cars,
            horizon: d.horizon,
            rate: d.arrival_rates[0][0],
            arrival_rates: None,
            travel_time: None,
            patience: d.patience,
        }
    }
}

impl RideSpec {
    pub fn resolve(&self) -> Result<RideHailConfig> {
        let mut cfg = RideHailConfig::uniform(self.regions, self.n_cars, self.horizon, self.rate);
        if let Some(r) = &self.arrival_rates {
            cfg.arrival_rates = r.load().context("env.arrival_rates")?;
        }
        if let Some(t) = &self.travel_time {
            cfg.travel_time = t.load().context("env.travel_time")?;
        }
        cfg.patience = self.patience;
        cfg.validate().context("env")?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Mqn(MqnSpec),
    RideHail(RideSpec),
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Mqn(MqnSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    /// Training settings; `estimator`, `normalization` and `seed` are set
    /// per run from the lists below.
    pub ppo: PpoConfig,
    /// One set of runs per estimator and normalization scheme.
    pub estimators: Vec<EstimatorMode>,
    pub normalizations: Vec<NormalizationScheme>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvSpec::default(),
            ppo: PpoConfig::default(),
            estimators: vec![EstimatorMode::PlainMc],
            normalizations: vec![NormalizationScheme::InputOnly],
            seeds: vec![1],
            out: PathBuf::from("runs/experiment"),
        }
    }
}

fn distinct<T: std::hash::Hash + Eq + std::fmt::Debug + Clone>(field: &str, xs: &[T]) -> Result<()> {
    if xs.is_empty() {
        bail!("{field}: must not be empty");
    }
    let mut seen = HashSet::new();
    for x in xs {
        if !seen.insert(x.clone()) {
            bail!("{field}: duplicate entry {x:?}");
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        distinct("seeds", &self.seeds)?;
        distinct("estimators", &self.estimators)?;
        distinct("normalizations", &self.normalizations)?;
        for m in &self.estimators {
            m.validate().context("estimators")?;
        }
        self.ppo.validate().context("ppo")?;
        match &self.env {
            EnvSpec::Mqn(m) => m.resolve().map(drop),
            EnvSpec::RideHail(r) => r.resolve().map(drop),
        }
    }
}

/// Which fixed policy a study evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    /// MQN: serve class 1 first.
    Class1First,
    /// MQN: serve class 2 first.
    Class2First,
    /// Uniform over feasible actions.
    Uniform,
    /// MQN: optimal policy of the truncation.
    Optimal,
    /// Ride-hailing: match whenever possible.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaSpec {
    Zero,
    /// MQN: Poisson solution of the policy on the truncation.
    OracleH,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarianceConfig {
    pub env: EnvSpec,
    pub policy: PolicySpec,
    pub zeta: ZetaSpec,
    pub modes: Vec<EstimatorMode>,
    /// Extra `amp_sampled` modes, one per sample size.
    pub samples: Vec<usize>,
    /// `[q1, q2, q3]` for MQN, `[t, i]` for ride-hailing.
    pub anchors: Vec<Vec<u32>>,
    pub episodes: usize,
    pub seed: u64,
    /// MQN: use the exact average cost of the policy instead of the
    /// per-study estimate.
    pub oracle_average_cost: bool,
    pub out: PathBuf,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        VarianceConfig {
            env: EnvSpec::Mqn(MqnSpec { buffer_cap: Some(10), ..MqnSpec::default() }),
            policy: PolicySpec::Class1First,
            zeta: ZetaSpec::Zero,
            modes: vec![EstimatorMode::PlainMc, EstimatorMode::AmpExact],
            samples: Vec::new(),
            anchors: vec![vec![0, 0, 0]],
            episodes: 1000,
            seed: 1,
            oracle_average_cost: false,
            out: PathBuf::from("runs/variance"),
        }
    }
}

impl VarianceConfig {
    pub fn all_modes(&self) -> Vec<EstimatorMode> {
        let mut modes = self.modes.clone();
        modes.extend(self.samples.iter().map(|&samples| EstimatorMode::AmpSampled { samples }));
        modes
    }

    pub fn validate(&self) -> Result<()> {
        let modes = self.all_modes();
        distinct("modes", &modes)?;
        for m in &modes {
            m.validate().context("modes")?;
        }
        if self.episodes < 2 {
            bail!("episodes: need at least 2");
        }
        if self.anchors.is_empty() {
            bail!("anchors: must not be empty");
        }
        let arity = match &self.env {
            EnvSpec::Mqn(m) => {
                m.resolve()?;
                if matches!(self.policy, PolicySpec::Greedy) {
                    bail!("policy: greedy applies to ride_hail only");
                }
                if (self.zeta == ZetaSpec::OracleH || self.policy == PolicySpec::Optimal || self.oracle_average_cost)
                    && m.buffer_cap.is_none()
                {
                    bail!("env.buffer_cap: oracle quantities need a truncated network");
                }
                3
            }
            EnvSpec::RideHail(r) => {
                r.resolve()?;
                if !matches!(self.policy, PolicySpec::Uniform | PolicySpec::Greedy) {
                    bail!("policy: ride_hail supports uniform or greedy");
                }
                if self.zeta != ZetaSpec::Zero || self.oracle_average_cost {
                    bail!("zeta: ride_hail supports zero only");
                }
                2
            }
        };
        if let Some(a) = self.anchors.iter().find(|a| a.len() != arity) {
            bail!("anchors: expected {arity} coordinates, got {a:?}");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub env: MqnSpec,
    pub cap: u32,
    /// Fixed policies evaluated alongside the optimum.
    pub policies: Vec<PolicySpec>,
    pub out: PathBuf,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            env: MqnSpec::default(),
            cap: 10,
            policies: vec![PolicySpec::Class1First, PolicySpec::Class2First],
            out: PathBuf::from("runs/oracle"),
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.resolve()?;
        if let Some(p) = self.policies.iter().find(|p| matches!(p, PolicySpec::Greedy)) {
            bail!("policies: {p:?} is not an MQN policy");
        }
        Ok(())
    }
}

/// Parse `text`; `ppo` may not set the per-run fields.
pub fn parse_experiment(text: &str) -> Result<ExperimentConfig> {
    let raw: serde_json::Value = serde_json::from_str(text).context("config is not valid JSON")?;
    if let Some(ppo) = raw.get("ppo").and_then(|p| p.as_object()) {
        for key in ["estimator", "normalization", "seed"] {
            if ppo.contains_key(key) {
                bail!("ppo.{key}: set it through the top-level `{key}s` list instead");
            }
        }
    }
    let cfg: ExperimentConfig = serde_json::from_value(raw).context("config schema")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).context("config schema")
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
