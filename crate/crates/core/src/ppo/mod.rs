//! Clipped PPO with plain or AMP value targets.
//!
//! Each iteration rolls out `episodes` episodes with the current policy,
//! prepares the next-state expectation support alongside the rollouts,
//! builds value targets with `zeta` set to the previous iteration's value
//! net (zero in the first iteration), refits the value net, and takes
//! clipped-surrogate steps on batch-standardized advantages.
//!
//! Episode `e` of iteration `i` draws from streams keyed by
//! `(seed, i, e, purpose)` and results are merged in episode order, so a
//! run is reproducible for any worker count.

mod task;
mod update;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approximator::{fit_value, Adam, AdamConfig, FitConfig, Mlp, NormalizationScheme, PolicyHead, ValueNet};
use crate::error::{Error, Result};
use crate::estimators::{evaluate_plan, prepare_plan, EstimatorMode, ExpectationPlan};
use crate::rng::{stream_rng, PURPOSE_ROLLOUT, PURPOSE_SAMPLING, PURPOSE_TRAINING};

pub use task::{MqnTask, NeuralPolicy, RideTask, Task, Zeta};
pub use update::{
    compute_advantages, ppo_update, raw_advantages, surrogate_gradient, PolicySample, PolicyUpdateConfig, UpdateReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub iterations: usize,
    /// Episodes per iteration.
    pub episodes: usize,
    /// Hidden layer widths shared by the policy and value nets.
    pub hidden: Vec<usize>,
    pub clip_epsilon: f64,
    pub policy_epochs: usize,
    pub policy_minibatch: usize,
    pub policy_adam: AdamConfig,
    pub entropy_coef: f64,
    pub value_fit: FitConfig,
    pub estimator: EstimatorMode,
    pub normalization: NormalizationScheme,
    pub seed: u64,
    /// Rollout threads; 0 uses every core.
    pub workers: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            iterations: 50,
            episodes: 20,
            hidden: vec![32, 32],
            clip_epsilon: 0.2,
            policy_epochs: 4,
            policy_minibatch: 512,
            policy_adam: AdamConfig { learning_rate: 3e-3, ..AdamConfig::default() },
            entropy_coef: 0.0,
            value_fit: FitConfig {
                adam: AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() },
                ..FitConfig::default()
            },
            estimator: EstimatorMode::PlainMc,
            normalization: NormalizationScheme::InputOnly,
            seed: 0,
            workers: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::Config(format!("clip_epsilon must lie in (0, 1), got {}", self.clip_epsilon)));
        }
        if self.policy_minibatch == 0 || self.value_fit.minibatch == 0 {
            return Err(Error::Config("minibatch sizes must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !self.entropy_coef.is_finite() {
            return Err(Error::Config("entropy_coef must be finite".into()));
        }
        self.estimator.validate()
    }

    pub fn update_config(&self) -> PolicyUpdateConfig {
        PolicyUpdateConfig {
            epochs: self.policy_epochs,
            minibatch: self.policy_minibatch,
            clip_epsilon: self.clip_epsilon,
            entropy_coef: self.entropy_coef,
        }
    }

    fn layers(&self, input: usize, output: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        sizes.extend(&self.hidden);
        sizes.push(output);
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    /// Average cost (MQN) or mean matching rate (ride-hailing) of the
    /// iteration's rollouts.
    pub metric: f64,
    /// Raw-scale mean squared error of the refitted value net.
    pub value_loss: f64,
    pub mode: EstimatorMode,
    pub sim_s: f64,
    pub prep_s: f64,
    pub train_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: PolicyHead<f64>,
    /// Value net of the last iteration, if any ran.
    pub value: Option<ValueNet<f64>>,
    pub curve: Vec<IterationRecord>,
}

/// One rollout with everything later phases need.
pub struct EpisodeData<K: Task> {
    pub episode: K::Episode,
    pub samples: Vec<PolicySample>,
    /// Next-state expectation supports, one per decision (AMP modes only).
    pub plans: Option<Vec<ExpectationPlan<K::State, f64>>>,
}

fn rollout<K: Task>(
    task: &K,
    head: &PolicyHead<f64>,
    mode: EstimatorMode,
    seed: u64,
    iteration: usize,
    index: usize,
) -> Result<EpisodeData<K>> {
    let policy = NeuralPolicy { head, task };
    let tag = [iteration as u64, index as u64];
    let mut rng = stream_rng(seed, &[tag[0], tag[1], PURPOSE_ROLLOUT]);
    let episode = task.simulate(&policy, &mut rng)?;
    let decisions = task.decisions(&episode);
    let mut samples = Vec::with_capacity(decisions.len());
    for (k, (state, action)) in decisions.iter().enumerate() {
        let features = task.encode(state);
        let mask = task.mask(state);
        let probs = head.probabilities(&features, &mask)?;
        if !(probs[*action] > 0.0) {
            return Err(Error::Divergence(format!(
                "episode {index}, decision {k}: behavior probability of the taken action is {}",
                probs[*action]
            )));
        }
        samples.push(PolicySample { features, mask, action: *action, old_prob: probs[*action] });
    }
    let plans = if mode.is_amp() {
        let mut srng = stream_rng(seed, &[tag[0], tag[1], PURPOSE_SAMPLING]);
        let plans = decisions
            .iter()
            .enumerate()
            .map(|(k, (s, _))| {
                prepare_plan(task.dynamics(), &policy, *s, mode, &mut srng)
                    .map_err(|e| with_position(e, iteration, index, k))
            })
            .collect::<Result<Vec<_>>>()?;
        Some(plans)
    } else {
        None
    };
    Ok(EpisodeData { episode, samples, plans })
}

fn with_position(e: Error, iteration: usize, episode: usize, k: usize) -> Error {
    match e {
        Error::Intractable(msg) => {
            Error::Intractable(format!("iteration {iteration}, episode {episode}, decision {k}: {msg}"))
        }
        other => other,
    }
}

/// Roll out `count` episodes of iteration `iteration` with `head`.
pub fn collect_episodes<K: Task>(
    task: &K,
    head: &PolicyHead<f64>,
    mode: EstimatorMode,
    seed: u64,
    iteration: usize,
    count: usize,
) -> Result<Vec<EpisodeData<K>>> {
    (0..count).into_par_iter().map(|e| rollout(task, head, mode, seed, iteration, e)).collect()
}

/// Value targets per episode with `zeta` given by `zeta_net` (zero if `None`).
pub fn compute_targets<K: Task>(
    task: &K,
    data: &[EpisodeData<K>],
    zeta_net: Option<&ValueNet<f64>>,
    mode: EstimatorMode,
) -> Result<Vec<Vec<f64>>> {
    let episodes: Vec<&K::Episode> = data.iter().map(|d| &d.episode).collect();
    let baseline = task.baseline(&episodes)?;
    data.par_iter()
        .map(|d| {
            let zeta = Zeta::new(zeta_net, task);
            let zeta_here: Vec<f64> = d.samples.iter().map(|s| zeta.from_features(&s.features)).collect();
            let expected: Option<Vec<f64>> =
                d.plans.as_ref().map(|plans| plans.iter().map(|p| evaluate_plan(p, &zeta)).collect());
            task.targets(&d.episode, &zeta_here, expected.as_deref(), baseline, mode)
        })
        .collect()
}

/// Run `cfg.iterations` PPO iterations, calling `on_iteration` after each
/// with its record and the updated networks.
pub fn train<K, F>(task: &K, cfg: &PpoConfig, mut on_iteration: F) -> Result<TrainOutcome>
where
    K: Task,
    F: FnMut(&IterationRecord, &PolicyHead<f64>, &ValueNet<f64>) -> Result<()>,
{
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let mut init = stream_rng(cfg.seed, &[u64::MAX, PURPOSE_TRAINING]);
    let mut head = PolicyHead::random(&cfg.layers(task.feature_dim(), task.num_actions()), &mut init)?;
    let mut value = ValueNet::new(Mlp::random(&cfg.layers(task.feature_dim(), 1), &mut init)?);
    let mut opt = Adam::new(cfg.policy_adam, head.net.num_params());
    let update_cfg = cfg.update_config();
    let mut zeta_net: Option<ValueNet<f64>> = None;
    let mut curve = Vec::with_capacity(cfg.iterations);

    for it in 1..=cfg.iterations {
        let start = Instant::now();
        let data = pool.install(|| collect_episodes(task, &head, cfg.estimator, cfg.seed, it, cfg.episodes))?;
        let sim_s = start.elapsed().as_secs_f64();

        let t = Instant::now();
        let episodes: Vec<&K::Episode> = data.iter().map(|d| &d.episode).collect();
        let metric = task.metric(&episodes)?;
        let targets = pool.install(|| compute_targets(task, &data, zeta_net.as_ref(), cfg.estimator))?;
        let targets: Vec<f64> = targets.into_iter().flatten().collect();
        let samples: Vec<PolicySample> = data.into_iter().flat_map(|d| d.samples).collect();
        let inputs: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
        let mut prep_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let mut train_rng = stream_rng(cfg.seed, &[it as u64, PURPOSE_TRAINING]);
        let (fitted, report) = fit_value(&value, &inputs, &targets, cfg.normalization, &cfg.value_fit, &mut train_rng)
            .map_err(|e| at_iteration(e, it))?;
        value = fitted;
        let mut train_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let advantages =
            compute_advantages(&targets, &inputs, &value, task.minimizes()).map_err(|e| at_iteration(e, it))?;
        prep_s += t.elapsed().as_secs_f64();

        let t = Instant::now();
        ppo_update(&mut head, &samples, &advantages, &update_cfg, &mut opt, &mut train_rng)
            .map_err(|e| at_iteration(e, it))?;
        train_s += t.elapsed().as_secs_f64();

        let record = IterationRecord {
            iteration: it,
            metric,
            value_loss: report.raw_mse,
            mode: cfg.estimator,
            sim_s,
            prep_s,
            train_s,
            total_s: start.elapsed().as_secs_f64(),
        };
        on_iteration(&record, &head, &value)?;
        curve.push(record);
        zeta_net = Some(value.clone());
    }
    Ok(TrainOutcome { policy: head, value: zeta_net, curve })
}

fn at_iteration(e: Error, it: usize) -> Error {
    match e {
        Error::Divergence(msg) => Error::Divergence(format!("iteration {it}: {msg}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_mqn::{MqnConfig, Regime};
    use crate::env_ridehail::RideHailConfig;

    fn small_mqn() -> MqnTask {
        MqnTask { cfg: MqnConfig::for_regime(Regime::IL, 200).with_cap(10) }
    }

    fn quick(mode: EstimatorMode, iterations: usize) -> PpoConfig {
        PpoConfig {
            iterations,
            episodes: 4,
            hidden: vec![8],
            value_fit: FitConfig { epochs: 2, minibatch: 64, ..PpoConfig::default().value_fit },
            policy_minibatch: 128,
            estimator: mode,
            seed: 9,
            ..PpoConfig::default()
        }
    }

    #[test]
    fn zero_iterations_return_the_initial_policy() {
        let task = small_mqn();
        let cfg = quick(EstimatorMode::PlainMc, 0);
        let out = train(&task, &cfg, |_, _, _| Ok(())).unwrap();
        assert!(out.curve.is_empty() && out.value.is_none());
        let mut init = stream_rng(cfg.seed, &[u64::MAX, PURPOSE_TRAINING]);
        let first = PolicyHead::random(&cfg.layers(3, 3), &mut init).unwrap();
        assert_eq!(out.policy, first);
    }

    #[test]
    fn same_seed_gives_identical_curves() {
        let task = small_mqn();
        let cfg = quick(EstimatorMode::AmpSampled { samples: 3 }, 3);
        let a = train(&task, &cfg, |_, _, _| Ok(())).unwrap();
        let b = train(&task, &PpoConfig { workers: 3, ..cfg.clone() }, |_, _, _| Ok(())).unwrap();
        let strip = |c: &[IterationRecord]| c.iter().map(|r| (r.metric, r.value_loss)).collect::<Vec<_>>();
        assert_eq!(strip(&a.curve), strip(&b.curve));
        assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn first_iteration_targets_collapse_to_plain() {
        let task = small_mqn();
        let cfg = quick(EstimatorMode::PlainMc, 1);
        let head = PolicyHead::random(&cfg.layers(3, 3), &mut stream_rng(1, &[])).unwrap();
        let plain = collect_episodes(&task, &head, EstimatorMode::PlainMc, 5, 1, 3).unwrap();
        let want = compute_targets(&task, &plain, None, EstimatorMode::PlainMc).unwrap();
        for mode in [EstimatorMode::AmpExact, EstimatorMode::AmpSampled { samples: 4 }] {
            let data = collect_episodes(&task, &head, mode, 5, 1, 3).unwrap();
            assert_eq!(compute_targets(&task, &data, None, mode).unwrap(), want);
        }
        let ride = RideTask { cfg: RideHailConfig::uniform(2, 3, 4, 0.5) };
        let rhead =
            PolicyHead::random(&cfg.layers(ride.feature_dim(), ride.num_actions()), &mut stream_rng(1, &[])).unwrap();
        let plain = collect_episodes(&ride, &rhead, EstimatorMode::PlainMc, 5, 1, 3).unwrap();
        let data = collect_episodes(&ride, &rhead, EstimatorMode::AmpSampled { samples: 2 }, 5, 1, 3).unwrap();
        assert_eq!(
            compute_targets(&ride, &data, None, EstimatorMode::AmpSampled { samples: 2 }).unwrap(),
            compute_targets(&ride, &plain, None, EstimatorMode::PlainMc).unwrap()
        );
    }

    #[test]
    fn exact_mode_on_ride_hailing_fails_in_the_first_iteration() {
        let ride = RideTask { cfg: RideHailConfig::uniform(2, 3, 3, 0.5) };
        let cfg = PpoConfig { hidden: vec![4], ..quick(EstimatorMode::AmpExact, 2) };
        let mut seen = 0;
        let err = train(&ride, &cfg, |_, _, _| {
            seen += 1;
            Ok(())
        })
        .unwrap_err();
        assert_eq!(seen, 0);
        assert!(matches!(err, Error::Intractable(_)));
        assert!(err.to_string().contains("iteration 1"), "{err}");
    }

    #[test]
    fn phase_times_account_for_the_iteration() {
        let task = MqnTask { cfg: MqnConfig::for_regime(Regime::IL, 2000).with_cap(10) };
        let cfg = PpoConfig { episodes: 8, ..quick(EstimatorMode::AmpSampled { samples: 20 }, 2) };
        let out = train(&task, &cfg, |_, _, _| Ok(())).unwrap();
        for r in &out.curve {
            let sum = r.sim_s + r.prep_s + r.train_s;
            assert!(r.sim_s >= 0.0 && r.prep_s >= 0.0 && r.train_s >= 0.0);
            assert!((r.total_s - sum).abs() <= 0.05 * r.total_s, "{sum} vs {}", r.total_s);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let task = small_mqn();
        for cfg in [
            PpoConfig { episodes: 0, ..PpoConfig::default() },
            PpoConfig { clip_epsilon: 1.0, ..PpoConfig::default() },
            PpoConfig { estimator: EstimatorMode::AmpSampled { samples: 0 }, ..PpoConfig::default() },
        ] {
            assert!(matches!(train(&task, &cfg, |_, _, _| Ok(())), Err(Error::Config(_))));
        }
    }
}
