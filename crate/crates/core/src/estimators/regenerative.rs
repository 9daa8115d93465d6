use rand::Rng;

use super::plan::{evaluate_plans, prepare_plans};
use super::{EstimatorMode, TargetIndex, TargetRecord, TargetSet, ValueApproximation};
use crate::env_mqn::{MqnAction, MqnConfig, MqnState, MqnTrajectory};
use crate::error::{contract, Result};
use crate::policy::Policy;
use crate::scalar::Scalar;

/// Empirical mean holding cost over every step of every trajectory.
pub fn estimate_average_cost<T: Scalar>(trajs: &[MqnTrajectory]) -> Result<T> {
    let steps: usize = trajs.iter().map(|t| t.costs.len()).sum();
    if steps == 0 {
        return contract("estimate_average_cost needs at least one step");
    }
    let total: u64 = trajs.iter().flat_map(|t| t.costs.iter()).map(|&c| c as u64).sum();
    Ok(T::of(total as f64) / T::of_usize(steps))
}

/// `is_cut[k]`: the cycle containing `k` ends right after `k`, i.e. `k + 1`
/// is a regeneration point or the end of the episode.
pub(crate) fn cycle_cuts(traj: &MqnTrajectory) -> Result<Vec<bool>> {
    let n = traj.len();
    if traj.states.len() != n + 1 || traj.costs.len() != n {
        return contract("malformed MQN trajectory");
    }
    let mut cut = vec![false; n];
    for &r in &traj.regen_indices {
        if r > n || !traj.states[r].is_empty() {
            return contract(format!("regeneration index {r} does not point at the empty state"));
        }
        if r >= 1 {
            cut[r - 1] = true;
        }
    }
    if n > 0 {
        cut[n - 1] = true;
    }
    Ok(cut)
}

fn step_records<T: Scalar>(values: Vec<T>, mode: EstimatorMode) -> TargetSet<T> {
    let records = values
        .into_iter()
        .enumerate()
        .map(|(k, target)| TargetRecord { index: TargetIndex::Step(k), target })
        .collect();
    TargetSet { mode, records }
}

/// Plain regenerative estimator `sum_{t=k}^{sigma_k - 1} (g(x_t) - avg)`,
/// where `sigma_k` is the first regeneration after `k` (episode end if none).
pub fn centered_regenerative_targets<T: Scalar>(traj: &MqnTrajectory, avg_cost: T) -> Result<TargetSet<T>> {
    let cut = cycle_cuts(traj)?;
    let n = traj.len();
    let mut out = vec![T::zero(); n];
    let mut acc = T::zero();
    for k in (0..n).rev() {
        if cut[k] {
            acc = T::zero();
        }
        acc = (T::of(traj.costs[k] as f64) - avg_cost) + acc;
        out[k] = acc;
    }
    Ok(step_records(out, EstimatorMode::PlainMc))
}

/// AMP regenerative targets from precomputed expectations
/// `expected[k] = sum_a eta(a|x_k) E[zeta(x_{k+1}) | x_k, a]`.
pub fn mqn_amp_from_expectations<T: Scalar>(
    traj: &MqnTrajectory,
    zeta_here: &[T],
    expected: &[T],
    avg_cost: T,
    mode: EstimatorMode,
) -> Result<TargetSet<T>> {
    let cut = cycle_cuts(traj)?;
    let n = traj.len();
    if zeta_here.len() != n || expected.len() != n {
        return contract(format!("{n} steps but {} zeta values and {} expectations", zeta_here.len(), expected.len()));
    }
    let mut out = vec![T::zero(); n];
    let mut acc = T::zero();
    for k in (0..n).rev() {
        if cut[k] {
            acc = T::zero();
        }
        let increment = ((T::of(traj.costs[k] as f64) - avg_cost) + expected[k]) - zeta_here[k];
        acc = increment + acc;
        out[k] = zeta_here[k] + acc;
    }
    let set = step_records(out, mode);
    set.check_finite()?;
    Ok(set)
}

/// Average-cost AMP targets for every step of `traj`; plain mode returns the
/// centered regenerative sums.
pub fn mqn_amp_targets<T, Z, P, R>(
    traj: &MqnTrajectory,
    zeta: &Z,
    policy: &P,
    cfg: &MqnConfig,
    avg_cost: T,
    mode: EstimatorMode,
    rng: &mut R,
) -> Result<TargetSet<T>>
where
    T: Scalar,
    Z: ValueApproximation<MqnState, T> + ?Sized,
    P: Policy<MqnState, MqnAction, T> + ?Sized,
    R: Rng + ?Sized,
{
    if !mode.is_amp() {
        return centered_regenerative_targets(traj, avg_cost);
    }
    let n = traj.len();
    let plans = prepare_plans(cfg, policy, &traj.states[..n], mode, rng)?;
    let expected = evaluate_plans(&plans, zeta);
    let zeta_here: Vec<T> = traj.states[..n].iter().map(|s| zeta.evaluate(s)).collect();
    mqn_amp_from_expectations(traj, &zeta_here, &expected, avg_cost, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_mqn::{simulate_mqn_episode, Regime, UniformFeasible};
    use crate::estimators::ZeroValue;
    use crate::rng::stream_rng;

    fn fake(states: Vec<MqnState>) -> MqnTrajectory {
        let n = states.len() - 1;
        let regen_indices = states.iter().enumerate().filter(|(_, s)| s.is_empty()).map(|(i, _)| i).collect();
        MqnTrajectory {
            costs: states[..n].iter().map(|s| s.cost()).collect(),
            actions: vec![MqnAction::Idle; n],
            states,
            regen_indices,
        }
    }

    #[test]
    fn average_cost() {
        let tr = fake(vec![
            MqnState::EMPTY,
            MqnState::new(1, 0, 0),
            MqnState::new(1, 1, 0),
            MqnState::new(1, 1, 1),
            MqnState::new(1, 1, 2),
        ]);
        assert_eq!(estimate_average_cost::<f64>(&[tr.clone()]).unwrap(), 1.5);
        assert!(estimate_average_cost::<f64>(&[]).is_err());
        let flat = fake(vec![MqnState::new(1, 1, 0); 4]);
        assert_eq!(estimate_average_cost::<f64>(&[flat]).unwrap(), 2.0);
    }

    #[test]
    fn cycles_reset_at_regeneration() {
        // costs 0,1,0,1,2 with the empty state at positions 0 and 2
        let tr = fake(vec![
            MqnState::EMPTY,
            MqnState::new(1, 0, 0),
            MqnState::EMPTY,
            MqnState::new(0, 1, 0),
            MqnState::new(0, 1, 1),
            MqnState::new(0, 1, 1),
        ]);
        let t = centered_regenerative_targets(&tr, 1.0).unwrap();
        // cycle [0,1]: (0-1)+(1-1) ; [1]: 0 ; cycle [2..5): (0-1)+(1-1)+(2-1)
        assert_eq!(t.values(), vec![-1.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn malformed_regen_structure_is_rejected() {
        let mut tr = fake(vec![MqnState::EMPTY, MqnState::new(1, 0, 0), MqnState::new(1, 0, 0)]);
        tr.regen_indices.push(2);
        assert!(centered_regenerative_targets(&tr, 0.0).is_err());
    }

    #[test]
    fn zero_zeta_is_the_centered_estimator() {
        let cfg = MqnConfig::for_regime(Regime::IM, 400);
        let mut rng = stream_rng(2, &[]);
        let tr = simulate_mqn_episode::<f64, _, _>(&UniformFeasible, &cfg, &mut rng).unwrap();
        let avg = estimate_average_cost::<f64>(std::slice::from_ref(&tr)).unwrap();
        let plain = centered_regenerative_targets(&tr, avg).unwrap();
        for mode in [EstimatorMode::AmpExact, EstimatorMode::AmpSampled { samples: 4 }] {
            let amp = mqn_amp_targets(&tr, &ZeroValue, &UniformFeasible, &cfg, avg, mode, &mut rng).unwrap();
            assert_eq!(amp.values(), plain.values());
        }
    }
}
