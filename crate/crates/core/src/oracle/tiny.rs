//! Small finite-horizon MDPs solved by backward induction and full
//! trajectory enumeration.

use rand::Rng;

use crate::dynamics::{Dynamics, NextLaw};
use crate::error::{Error, Result};
use crate::estimators::{
    episodic_amp_backward, evaluate_plan, prepare_plan, reward_to_go, EstimatorMode, TargetIndex, TargetRecord,
    TargetSet, ValueApproximation,
};
use crate::policy::{sample_action, Policy};
use crate::rng::sample_index;
use crate::scalar::Scalar;

pub const TRAJECTORY_CAP: usize = 100_000;

/// Explicit MDP over states `0..n` with `horizon` decisions per episode.
///
/// `transitions[s][a]` lists `(next, probability)` and `rewards[s][a]` is
/// the reward for taking `a` in `s`; actions of `s` are `0..rewards[s].len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyMdp<T> {
    pub transitions: Vec<Vec<Vec<(usize, T)>>>,
    pub rewards: Vec<Vec<T>>,
    pub horizon: usize,
    pub initial: usize,
}

/// A state paired with the decision step it is visited at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TinyState {
    pub step: usize,
    pub state: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyTrajectory<T> {
    pub states: Vec<TinyState>,
    pub actions: Vec<usize>,
    pub rewards: Vec<T>,
}

impl<T: Scalar> TinyMdp<T> {
    pub fn new(
        transitions: Vec<Vec<Vec<(usize, T)>>>,
        rewards: Vec<Vec<T>>,
        horizon: usize,
        initial: usize,
    ) -> Result<Self> {
        let mdp = TinyMdp { transitions, rewards, horizon, initial };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn num_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn num_actions(&self, s: usize) -> usize {
        self.rewards[s].len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_states();
        if n == 0 || self.transitions.len() != n || self.initial >= n {
            return Err(Error::Config("TinyMdp needs matching nonempty tables and a valid initial state".into()));
        }
        for s in 0..n {
            if self.rewards[s].is_empty() || self.transitions[s].len() != self.rewards[s].len() {
                return Err(Error::Config(format!("state {s}: action tables disagree or are empty")));
            }
            for (a, row) in self.transitions[s].iter().enumerate() {
                if row.iter().any(|(y, p)| *y >= n || *p < T::zero() || !p.is_finite()) {
                    return Err(Error::Config(format!("state {s}, action {a}: bad transition entry")));
                }
                let sum = row.iter().fold(T::zero(), |acc, (_, p)| acc + *p);
                if (sum - T::one()).abs() > T::of(1e-12) {
                    return Err(Error::Config(format!("state {s}, action {a}: row sums to {sum}")));
                }
            }
        }
        Ok(())
    }

    /// Chain `0 -> 1 -> ... -> horizon` with one action and reward `r` per step.
    pub fn deterministic_chain(horizon: usize, r: T) -> Self {
        let n = horizon + 1;
        let transitions = (0..n).map(|s| vec![vec![((s + 1).min(n - 1), T::one())]]).collect();
        let rewards = vec![vec![r]; n];
        TinyMdp { transitions, rewards, horizon, initial: 0 }
    }

    /// Random instance with `actions` actions per state and `outcomes`
    /// distinct next states per action (fewer if `n` is smaller).
    pub fn random<R: Rng + ?Sized>(n: usize, actions: usize, outcomes: usize, horizon: usize, rng: &mut R) -> Self {
        let k = outcomes.clamp(1, n);
        let mut transitions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for _ in 0..n {
            let mut rows = Vec::with_capacity(actions);
            let mut rs = Vec::with_capacity(actions);
            for _ in 0..actions {
                let mut targets: Vec<usize> = (0..n).collect();
                for i in 0..k {
                    let j = rng.random_range(i..n);
                    targets.swap(i, j);
                }
                let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
                let total: f64 = w.iter().sum();
                let mut row: Vec<(usize, T)> = Vec::with_capacity(k);
                let mut used = T::zero();
                for i in 0..k {
                    let p = if i + 1 == k { T::one() - used } else { T::of(w[i] / total) };
                    used += p;
                    row.push((targets[i], p));
                }
                rows.push(row);
                rs.push(T::of(rng.random_range(-1.0..2.0)));
            }
            transitions.push(rows);
            rewards.push(rs);
        }
        TinyMdp { transitions, rewards, horizon, initial: 0 }
    }

    fn check_action(&self, s: &TinyState, a: usize) -> Result<()> {
        if a < self.num_actions(s.state) {
            Ok(())
        } else {
            Err(Error::Infeasible(format!("action {a} at state {} (step {})", s.state, s.step)))
        }
    }
}

impl<T: Scalar> Dynamics<T> for TinyMdp<T> {
    type State = TinyState;
    type Action = usize;

    fn next_law(&self, state: &TinyState, action: &usize) -> Result<NextLaw<TinyState, T>> {
        self.check_action(state, *action)?;
        if state.step + 1 >= self.horizon {
            return Ok(NextLaw::Deterministic(None));
        }
        let support: Vec<(Option<TinyState>, T)> = self.transitions[state.state][*action]
            .iter()
            .filter(|(_, p)| *p > T::zero())
            .map(|&(y, p)| (Some(TinyState { step: state.step + 1, state: y }), p))
            .collect();
        Ok(if support.len() == 1 {
            NextLaw::Deterministic(support.into_iter().next().and_then(|(s, _)| s))
        } else {
            NextLaw::Enumerable(support)
        })
    }

    fn sample_next<R: Rng + ?Sized>(
        &self,
        state: &TinyState,
        action: &usize,
        rng: &mut R,
    ) -> Result<Option<TinyState>> {
        self.check_action(state, *action)?;
        if state.step + 1 >= self.horizon {
            return Ok(None);
        }
        let row = &self.transitions[state.state][*action];
        let weights: Vec<T> = row.iter().map(|(_, p)| *p).collect();
        let y = row[sample_index(&weights, rng)].0;
        Ok(Some(TinyState { step: state.step + 1, state: y }))
    }
}

/// `V[t][s]` for `t = 0..=horizon`, with `V[horizon] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicValue<T> {
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> EpisodicValue<T> {
    pub fn at(&self, s: &TinyState) -> T {
        self.values.get(s.step).and_then(|row| row.get(s.state)).copied().unwrap_or_else(T::zero)
    }
}

impl<T: Scalar> ValueApproximation<TinyState, T> for EpisodicValue<T> {
    fn evaluate(&self, state: &TinyState) -> T {
        self.at(state)
    }

    fn descriptor(&self) -> String {
        "oracle V".into()
    }
}

/// Policy value by backward induction.
pub fn exact_policy_value_episodic<T, P>(mdp: &TinyMdp<T>, policy: &P) -> Result<EpisodicValue<T>>
where
    T: Scalar,
    P: Policy<TinyState, usize, T> + ?Sized,
{
    let n = mdp.num_states();
    let mut values = vec![vec![T::zero(); n]; mdp.horizon + 1];
    for t in (0..mdp.horizon).rev() {
        for s in 0..n {
            let here = TinyState { step: t, state: s };
            let mut v = T::zero();
            for (a, pa) in policy.distribution(&here) {
                mdp.check_action(&here, a)?;
                let next = mdp.transitions[s][a].iter().fold(T::zero(), |acc, &(y, p)| acc + p * values[t + 1][y]);
                v += pa * (mdp.rewards[s][a] + next);
            }
            values[t][s] = v;
        }
    }
    Ok(EpisodicValue { values })
}

/// Every trajectory from the initial state with its probability.
///
/// Zero-probability branches are skipped. Fails once more than
/// [`TRAJECTORY_CAP`] trajectories would be produced.
pub fn enumerate_trajectory_distribution<T, P>(mdp: &TinyMdp<T>, policy: &P) -> Result<Vec<(TinyTrajectory<T>, T)>>
where
    T: Scalar,
    P: Policy<TinyState, usize, T> + ?Sized,
{
    let mut out = Vec::new();
    let mut prefix = TinyTrajectory { states: Vec::new(), actions: Vec::new(), rewards: Vec::new() };
    if mdp.horizon > 0 {
        expand(mdp, policy, mdp.initial, T::one(), &mut prefix, &mut out)?;
    } else {
        out.push((prefix, T::one()));
    }
    Ok(out)
}

fn expand<T, P>(
    mdp: &TinyMdp<T>,
    policy: &P,
    s: usize,
    prob: T,
    prefix: &mut TinyTrajectory<T>,
    out: &mut Vec<(TinyTrajectory<T>, T)>,
) -> Result<()>
where
    T: Scalar,
    P: Policy<TinyState, usize, T> + ?Sized,
{
    let here = TinyState { step: prefix.states.len(), state: s };
    for (a, pa) in policy.distribution(&here) {
        if pa <= T::zero() {
            continue;
        }
        mdp.check_action(&here, a)?;
        prefix.states.push(here);
        prefix.actions.push(a);
        prefix.rewards.push(mdp.rewards[s][a]);
        if prefix.states.len() == mdp.horizon {
            if out.len() == TRAJECTORY_CAP {
                return Err(Error::Oracle(format!(
                    "more than {TRAJECTORY_CAP} trajectories; use fewer states, actions or steps"
                )));
            }
            out.push((prefix.clone(), prob * pa));
        } else {
            for &(y, p) in &mdp.transitions[s][a] {
                if p > T::zero() {
                    expand(mdp, policy, y, prob * pa * p, prefix, out)?;
                }
            }
        }
        prefix.states.pop();
        prefix.actions.pop();
        prefix.rewards.pop();
    }
    Ok(())
}

pub fn simulate_tiny_episode<T, P, R>(mdp: &TinyMdp<T>, policy: &P, rng: &mut R) -> Result<TinyTrajectory<T>>
where
    T: Scalar,
    P: Policy<TinyState, usize, T> + ?Sized,
    R: Rng + ?Sized,
{
    let mut traj = TinyTrajectory { states: Vec::new(), actions: Vec::new(), rewards: Vec::new() };
    let mut s = mdp.initial;
    for t in 0..mdp.horizon {
        let here = TinyState { step: t, state: s };
        let a = sample_action(policy, &here, rng)
            .ok_or_else(|| Error::Contract(format!("policy has no action at step {t}")))?;
        mdp.check_action(&here, a)?;
        traj.states.push(here);
        traj.actions.push(a);
        traj.rewards.push(mdp.rewards[s][a]);
        let row = &mdp.transitions[s][a];
        let weights: Vec<T> = row.iter().map(|(_, p)| *p).collect();
        s = row[sample_index(&weights, rng)].0;
    }
    Ok(traj)
}

fn step_records<T: Scalar>(values: Vec<T>, mode: EstimatorMode) -> TargetSet<T> {
    let records = values
        .into_iter()
        .enumerate()
        .map(|(k, target)| TargetRecord { index: TargetIndex::Step(k), target })
        .collect();
    TargetSet { mode, records }
}

pub fn tiny_plain_targets<T: Scalar>(traj: &TinyTrajectory<T>) -> TargetSet<T> {
    step_records(reward_to_go(&traj.rewards), EstimatorMode::PlainMc)
}

/// Episodic AMP targets on a tiny trajectory. `dynamics` supplies the
/// next-state laws; it is usually the MDP itself.
pub fn tiny_amp_targets<T, D, Z, P, R>(
    dynamics: &D,
    traj: &TinyTrajectory<T>,
    zeta: &Z,
    policy: &P,
    mode: EstimatorMode,
    rng: &mut R,
) -> Result<TargetSet<T>>
where
    T: Scalar,
    D: Dynamics<T, State = TinyState, Action = usize>,
    Z: ValueApproximation<TinyState, T> + ?Sized,
    P: Policy<TinyState, usize, T> + ?Sized,
    R: Rng + ?Sized,
{
    if !mode.is_amp() {
        return Ok(tiny_plain_targets(traj));
    }
    let zeta_here: Vec<T> = traj.states.iter().map(|s| zeta.evaluate(s)).collect();
    let expected = traj
        .states
        .iter()
        .map(|s| prepare_plan(dynamics, policy, s, mode, rng).map(|plan| evaluate_plan(&plan, zeta)))
        .collect::<Result<Vec<T>>>()?;
    Ok(step_records(episodic_amp_backward(&traj.rewards, &zeta_here, &expected)?, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{FnValue, ZeroValue};
    use crate::policy::FnPolicy;
    use crate::rng::stream_rng;

    fn uniform(mdp: &TinyMdp<f64>) -> impl Policy<TinyState, usize, f64> + '_ {
        FnPolicy(move |s: &TinyState| {
            let k = mdp.num_actions(s.state);
            (0..k).map(|a| (a, 1.0 / k as f64)).collect::<Vec<_>>()
        })
    }

    #[test]
    fn zero_rewards_give_zero_value() {
        let mut mdp = TinyMdp::random(4, 2, 2, 3, &mut stream_rng(1, &[]));
        mdp.rewards.iter_mut().flatten().for_each(|r| *r = 0.0);
        let v = exact_policy_value_episodic(&mdp, &uniform(&mdp)).unwrap();
        assert!(v.values.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn deterministic_chain_value_counts_steps() {
        let mdp = TinyMdp::deterministic_chain(3, 1.0);
        mdp.validate().unwrap();
        let v = exact_policy_value_episodic(&mdp, &uniform(&mdp)).unwrap();
        assert_eq!(v.at(&TinyState { step: 0, state: 0 }), 3.0);
        let trajs = enumerate_trajectory_distribution(&mdp, &uniform(&mdp)).unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].1, 1.0);
    }

    #[test]
    fn bellman_residual_is_tiny_on_a_random_mdp() {
        let mdp = TinyMdp::random(4, 2, 3, 5, &mut stream_rng(2, &[]));
        mdp.validate().unwrap();
        let pol = uniform(&mdp);
        let v = exact_policy_value_episodic(&mdp, &pol).unwrap();
        for t in 0..mdp.horizon {
            for s in 0..4 {
                let here = TinyState { step: t, state: s };
                let mut rhs = 0.0;
                for (a, pa) in pol.distribution(&here) {
                    let next: f64 = mdp.transitions[s][a].iter().map(|&(y, p)| p * v.values[t + 1][y]).sum();
                    rhs += pa * (mdp.rewards[s][a] + next);
                }
                assert!((v.values[t][s] - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_outcome_arrivals_over_two_steps() {
        let mdp = TinyMdp::new(
            vec![vec![vec![(0, 0.3), (1, 0.7)]], vec![vec![(0, 0.6), (1, 0.4)]]],
            vec![vec![1.0], vec![2.0]],
            2,
            0,
        )
        .unwrap();
        let pol = uniform(&mdp);
        // Horizon 2: the last transition is not recorded, so expand it one
        // step further to see four trajectories.
        let longer = TinyMdp { horizon: 3, ..mdp.clone() };
        assert_eq!(enumerate_trajectory_distribution(&mdp, &pol).unwrap().len(), 2);
        let all = enumerate_trajectory_distribution(&longer, &pol).unwrap();
        assert_eq!(all.len(), 4);
        let total: f64 = all.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_plain_targets_equal_the_value() {
        let mdp = TinyMdp::random(3, 2, 2, 4, &mut stream_rng(3, &[]));
        let pol = uniform(&mdp);
        let v = exact_policy_value_episodic(&mdp, &pol).unwrap();
        let mean: f64 = enumerate_trajectory_distribution(&mdp, &pol)
            .unwrap()
            .iter()
            .map(|(traj, p)| p * tiny_plain_targets(traj).values()[0])
            .sum();
        assert!((mean - v.at(&TinyState { step: 0, state: 0 })).abs() < 1e-10);
    }

    #[test]
    fn exact_amp_is_unbiased_for_any_zeta() {
        let mdp = TinyMdp::random(3, 2, 2, 4, &mut stream_rng(4, &[]));
        let pol = uniform(&mdp);
        let v = exact_policy_value_episodic(&mdp, &pol).unwrap();
        let zeta =
            FnValue { f: |s: &TinyState| (s.state as f64 * 1.7 - s.step as f64).sin() * 5.0, name: "wave".into() };
        let mut rng = stream_rng(0, &[]);
        let mean: f64 = enumerate_trajectory_distribution(&mdp, &pol)
            .unwrap()
            .iter()
            .map(|(traj, p)| {
                p * tiny_amp_targets(&mdp, traj, &zeta, &pol, EstimatorMode::AmpExact, &mut rng).unwrap().values()[0]
            })
            .sum();
        assert!((mean - v.at(&TinyState { step: 0, state: 0 })).abs() < 1e-10);
    }

    #[test]
    fn zeta_equal_to_v_removes_all_noise() {
        let mdp = TinyMdp::random(3, 1, 2, 4, &mut stream_rng(5, &[]));
        let pol = uniform(&mdp);
        let v = exact_policy_value_episodic(&mdp, &pol).unwrap();
        let mut rng = stream_rng(6, &[]);
        for _ in 0..50 {
            let traj = simulate_tiny_episode(&mdp, &pol, &mut rng).unwrap();
            let t = tiny_amp_targets(&mdp, &traj, &v, &pol, EstimatorMode::AmpExact, &mut rng).unwrap();
            for (s, x) in traj.states.iter().zip(t.values()) {
                assert!((x - v.at(s)).abs() < 1e-12);
            }
        }
        let traj = simulate_tiny_episode(&mdp, &pol, &mut rng).unwrap();
        let zero = tiny_amp_targets(&mdp, &traj, &ZeroValue, &pol, EstimatorMode::AmpExact, &mut rng).unwrap();
        assert_eq!(zero.values(), tiny_plain_targets(&traj).values());
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let mdp = TinyMdp::random(6, 3, 6, 8, &mut stream_rng(7, &[]));
        let err = enumerate_trajectory_distribution(&mdp, &uniform(&mdp)).unwrap_err();
        assert!(err.to_string().contains("smaller") || err.to_string().contains("fewer"));
    }
}
