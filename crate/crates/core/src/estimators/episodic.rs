use rand::Rng;

use super::plan::{evaluate_plan, prepare_plan};
use super::{EstimatorMode, TargetIndex, TargetRecord, TargetSet, ValueApproximation};
use crate::env_ridehail::{RideHailConfig, RideHailState, RideTrajectory, SdmAction};
use crate::error::{contract, Result};
use crate::policy::Policy;
use crate::scalar::Scalar;

/// Suffix sums `sum_{j >= k} r_j`, one backward pass.
pub fn reward_to_go<T: Scalar>(rewards: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); rewards.len()];
    let mut acc = T::zero();
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        acc = *r + acc;
        *o = acc;
    }
    out
}

fn ride_records<T: Scalar>(traj: &RideTrajectory, values: Vec<T>, mode: EstimatorMode) -> TargetSet<T> {
    let records = traj
        .steps
        .iter()
        .zip(values)
        .map(|(s, target)| TargetRecord { index: TargetIndex::Epoch { t: s.epoch, i: s.step }, target })
        .collect();
    TargetSet { mode, records }
}

/// One-replication value estimates: total reward from each decision to the
/// end of the episode.
pub fn plain_mc_targets<T: Scalar>(traj: &RideTrajectory) -> TargetSet<T> {
    let rewards: Vec<T> = traj.steps.iter().map(|s| T::of(s.reward as f64)).collect();
    ride_records(traj, reward_to_go(&rewards), EstimatorMode::PlainMc)
}

/// Per-position martingale increments `E[zeta(next)] - zeta(current)`.
pub fn martingale_corrections<T: Scalar>(zeta_here: &[T], expected_next: &[T]) -> Result<Vec<T>> {
    if zeta_here.len() != expected_next.len() {
        return contract(format!("{} zeta values but {} expectations", zeta_here.len(), expected_next.len()));
    }
    Ok(expected_next.iter().zip(zeta_here).map(|(e, z)| *e - *z).collect())
}

/// `M(s_k) = zeta(s_k) + sum_{j >= k} correction_j`.
pub fn martingale_process<T: Scalar>(zeta_here: &[T], corrections: &[T]) -> Result<Vec<T>> {
    if zeta_here.len() != corrections.len() {
        return contract("martingale_process: length mismatch");
    }
    Ok(reward_to_go(corrections).into_iter().zip(zeta_here).map(|(s, z)| *z + s).collect())
}

/// AMP targets `zeta(s_k) + sum_{j >= k} (r_j + E[zeta(s_{j+1})] - zeta(s_j))`.
///
/// The summand is formed as `(r + e) - z`; with `zeta = 0` the pass is the
/// same as [`reward_to_go`] operation for operation.
pub fn episodic_amp_backward<T: Scalar>(rewards: &[T], zeta_here: &[T], expected_next: &[T]) -> Result<Vec<T>> {
    let n = rewards.len();
    if zeta_here.len() != n || expected_next.len() != n {
        return contract(format!(
            "episodic AMP inputs: {n} rewards, {} zeta values, {} expectations",
            zeta_here.len(),
            expected_next.len()
        ));
    }
    let mut out = vec![T::zero(); n];
    let mut acc = T::zero();
    for k in (0..n).rev() {
        let increment = (rewards[k] + expected_next[k]) - zeta_here[k];
        acc = increment + acc;
        out[k] = zeta_here[k] + acc;
    }
    Ok(out)
}

/// Policy-averaged expectation of `zeta` at the next decision state:
/// exact within an epoch, zero after the final step, and a sample mean over
/// arrival scenarios at an epoch boundary (exact mode fails there).
pub fn expected_zeta_ridehail<T, Z, P, R>(
    cfg: &RideHailConfig,
    state: &RideHailState,
    zeta: &Z,
    policy: &P,
    mode: EstimatorMode,
    rng: &mut R,
) -> Result<T>
where
    T: Scalar,
    Z: ValueApproximation<RideHailState, T> + ?Sized,
    P: Policy<RideHailState, SdmAction, T> + ?Sized,
    R: Rng + ?Sized,
{
    let plan = prepare_plan(cfg, policy, state, mode, rng)?;
    Ok(evaluate_plan(&plan, zeta))
}

pub fn amp_targets<T, Z, P, R>(
    traj: &RideTrajectory,
    zeta: &Z,
    policy: &P,
    cfg: &RideHailConfig,
    mode: EstimatorMode,
    rng: &mut R,
) -> Result<TargetSet<T>>
where
    T: Scalar,
    Z: ValueApproximation<RideHailState, T> + ?Sized,
    P: Policy<RideHailState, SdmAction, T> + ?Sized,
    R: Rng + ?Sized,
{
    if !mode.is_amp() {
        return Ok(plain_mc_targets(traj));
    }
    let rewards: Vec<T> = traj.steps.iter().map(|s| T::of(s.reward as f64)).collect();
    let zeta_here: Vec<T> = traj.steps.iter().map(|s| zeta.evaluate(&s.state)).collect();
    let expected = traj
        .steps
        .iter()
        .map(|s| expected_zeta_ridehail(cfg, &s.state, zeta, policy, mode, rng))
        .collect::<Result<Vec<T>>>()?;
    let set = ride_records(traj, episodic_amp_backward(&rewards, &zeta_here, &expected)?, mode);
    set.check_finite()?;
    Ok(set)
}
