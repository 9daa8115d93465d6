//! Spread of value targets at fixed anchor states across independent
//! episodes, for a frozen policy and `zeta`.
//!
//! Episode `e` always uses the rollout stream `(seed, e, ROLLOUT)`, so
//! different modes and sample sizes are compared on identical trajectories.

use rayon::prelude::*;

use super::plan::{evaluate_plans, prepare_plans, sampling_variance};
use super::regenerative::{cycle_cuts, mqn_amp_targets};
use super::{amp_targets, estimate_average_cost, EstimatorMode, ValueApproximation};
use crate::env_mqn::{simulate_mqn_episode, MqnAction, MqnConfig, MqnState, MqnTrajectory};
use crate::env_ridehail::{simulate_ride_episode, RideHailConfig, RideHailState, SdmAction};
use crate::error::{contract, Result};
use crate::policy::Policy;
use crate::rng::{stream_rng, PURPOSE_ROLLOUT, PURPOSE_SAMPLING};
use crate::scalar::Scalar;
use crate::stats::mean_variance;

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorReport<A, T> {
    pub anchor: A,
    pub mean: T,
    pub variance: T,
    /// Episodes that visited the anchor.
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceStudy<A, T> {
    pub mode: EstimatorMode,
    pub reports: Vec<AnchorReport<A, T>>,
    /// Anchors left out, with the reason.
    pub notes: Vec<String>,
}

fn summarize<A: Clone + std::fmt::Display, T: Scalar>(
    mode: EstimatorMode,
    anchors: &[A],
    per_episode: &[Vec<Option<T>>],
) -> VarianceStudy<A, T> {
    let mut reports = Vec::new();
    let mut notes = Vec::new();
    for (j, anchor) in anchors.iter().enumerate() {
        let xs: Vec<T> = per_episode.iter().filter_map(|v| v[j]).collect();
        match mean_variance(&xs) {
            Some((mean, variance)) => {
                reports.push(AnchorReport { anchor: anchor.clone(), mean, variance, episodes: xs.len() })
            }
            None => notes.push(format!("anchor {anchor} visited in {} episode(s); excluded", xs.len())),
        }
    }
    VarianceStudy { mode, reports, notes }
}

fn simulate_batch<T, P>(cfg: &MqnConfig, policy: &P, episodes: usize, seed: u64) -> Result<Vec<MqnTrajectory>>
where
    T: Scalar,
    P: Policy<MqnState, MqnAction, T> + Sync,
{
    (0..episodes)
        .into_par_iter()
        .map(|e| simulate_mqn_episode(policy, cfg, &mut stream_rng(seed, &[e as u64, PURPOSE_ROLLOUT])))
        .collect()
}

/// Target at the first visit of each anchor, per episode. The average cost is
/// `avg_cost` when given, otherwise estimated from all episodes.
#[allow(clippy::too_many_arguments)]
pub fn mqn_estimator_variance<T, Z, P>(
    cfg: &MqnConfig,
    policy: &P,
    zeta: &Z,
    mode: EstimatorMode,
    avg_cost: Option<T>,
    anchors: &[MqnState],
    episodes: usize,
    seed: u64,
) -> Result<VarianceStudy<MqnState, T>>
where
    T: Scalar,
    Z: ValueApproximation<MqnState, T> + Sync,
    P: Policy<MqnState, MqnAction, T> + Sync,
{
    if episodes < 2 {
        return contract("estimator_variance needs at least two episodes");
    }
    let trajs = simulate_batch(cfg, policy, episodes, seed)?;
    let avg = match avg_cost {
        Some(c) => c,
        None => estimate_average_cost(&trajs)?,
    };
    let per_episode: Vec<Vec<Option<T>>> = trajs
        .par_iter()
        .enumerate()
        .map(|(e, tr)| {
            let mut rng = stream_rng(seed, &[e as u64, PURPOSE_SAMPLING]);
            let targets = mqn_amp_targets(tr, zeta, policy, cfg, avg, mode, &mut rng)?;
            Ok(anchors
                .iter()
                .map(|a| tr.states[..tr.len()].iter().position(|s| s == a).map(|k| targets.records[k].target))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(summarize(mode, anchors, &per_episode))
}

/// Ride-hailing counterpart; anchors are `(epoch, step)` positions.
#[allow(clippy::too_many_arguments)]
pub fn ride_estimator_variance<T, Z, P>(
    cfg: &RideHailConfig,
    policy: &P,
    zeta: &Z,
    mode: EstimatorMode,
    anchors: &[(u32, usize)],
    episodes: usize,
    seed: u64,
) -> Result<VarianceStudy<PositionLabel, T>>
where
    T: Scalar,
    Z: ValueApproximation<RideHailState, T> + Sync,
    P: Policy<RideHailState, SdmAction, T> + Sync,
{
    if episodes < 2 {
        return contract("estimator_variance needs at least two episodes");
    }
    let per_episode: Vec<Vec<Option<T>>> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let tr = simulate_ride_episode(policy, cfg, &mut stream_rng(seed, &[e as u64, PURPOSE_ROLLOUT]))?;
            let mut rng = stream_rng(seed, &[e as u64, PURPOSE_SAMPLING]);
            let targets = amp_targets(&tr, zeta, policy, cfg, mode, &mut rng)?;
            Ok(anchors
                .iter()
                .map(|&(t, i)| {
                    tr.steps.iter().position(|s| s.epoch == t && s.step == i).map(|k| targets.records[k].target)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let labels: Vec<PositionLabel> = anchors.iter().map(|&(t, i)| PositionLabel { t, i }).collect();
    Ok(summarize(mode, &labels, &per_episode))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PositionLabel {
    pub t: u32,
    pub i: usize,
}

impl std::fmt::Display for PositionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t{}i{}", self.t, self.i)
    }
}

/// Sampled-versus-exact comparison on identical trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport<T> {
    /// Mean over all targets of `|sampled - exact|`.
    pub mean_abs_deviation: T,
    /// Three times the mean predicted per-target standard deviation of the
    /// sampling error, estimated from the within-sample variances.
    pub bound: T,
    pub targets: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn mqn_sampling_deviation<T, Z, P>(
    cfg: &MqnConfig,
    policy: &P,
    zeta: &Z,
    samples: usize,
    avg_cost: Option<T>,
    episodes: usize,
    seed: u64,
) -> Result<DeviationReport<T>>
where
    T: Scalar,
    Z: ValueApproximation<MqnState, T> + Sync,
    P: Policy<MqnState, MqnAction, T> + Sync,
{
    if episodes == 0 || samples < 2 {
        return contract("sampling deviation needs episodes >= 1 and samples >= 2");
    }
    let trajs = simulate_batch(cfg, policy, episodes, seed)?;
    let avg = match avg_cost {
        Some(c) => c,
        None => estimate_average_cost(&trajs)?,
    };
    let sampled_mode = EstimatorMode::AmpSampled { samples };
    let per: Vec<(T, T, usize)> = trajs
        .par_iter()
        .enumerate()
        .map(|(e, tr)| {
            let n = tr.len();
            let mut rng = stream_rng(seed, &[e as u64, PURPOSE_SAMPLING]);
            let exact = mqn_amp_targets(tr, zeta, policy, cfg, avg, EstimatorMode::AmpExact, &mut rng)?;
            let plans = prepare_plans(cfg, policy, &tr.states[..n], sampled_mode, &mut rng)?;
            let expected = evaluate_plans(&plans, zeta);
            let zeta_here: Vec<T> = tr.states[..n].iter().map(|s| zeta.evaluate(s)).collect();
            let sampled = super::mqn_amp_from_expectations(tr, &zeta_here, &expected, avg, sampled_mode)?;
            let cut = cycle_cuts(tr)?;
            let mut var_acc = T::zero();
            let mut abs_sum = T::zero();
            let mut sd_sum = T::zero();
            for k in (0..n).rev() {
                if cut[k] {
                    var_acc = T::zero();
                }
                var_acc += sampling_variance(&plans[k], zeta);
                sd_sum += var_acc.sqrt();
                abs_sum += (sampled.records[k].target - exact.records[k].target).abs();
            }
            Ok((abs_sum, sd_sum, n))
        })
        .collect::<Result<_>>()?;
    let count: usize = per.iter().map(|p| p.2).sum();
    if count == 0 {
        return contract("no targets to compare");
    }
    let c = T::of_usize(count);
    let mad = per.iter().fold(T::zero(), |a, p| a + p.0) / c;
    let sd = per.iter().fold(T::zero(), |a, p| a + p.1) / c;
    Ok(DeviationReport { mean_abs_deviation: mad, bound: T::of(3.0) * sd, targets: count })
}
