//! Next-state expectations `sum_a pi(a|s) E[zeta(s') | s, a]`.
//!
//! Building the support of the expectation (enumerating or sampling next
//! states) is separated from evaluating `zeta` on it, so that the sampling
//! can happen during simulation while `zeta` is applied later.

use std::collections::HashMap;

use rand::Rng;

use super::{EstimatorMode, ValueApproximation};
use crate::dynamics::{Dynamics, NextLaw};
use crate::error::{contract, Error, Result};
use crate::policy::Policy;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcomes<S, T> {
    /// Exact law; `None` is the end of the episode.
    Weighted(Vec<(Option<S>, T)>),
    /// Distinct draws in first-seen order with multiplicities.
    Sampled { draws: Vec<(Option<S>, usize)>, total: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionBranch<S, T> {
    pub prob: T,
    pub outcomes: Outcomes<S, T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationPlan<S, T> {
    pub branches: Vec<ActionBranch<S, T>>,
}

fn group_draws<S: Clone + Eq + std::hash::Hash>(draws: Vec<Option<S>>) -> Vec<(Option<S>, usize)> {
    let mut seen: HashMap<Option<S>, usize> = HashMap::new();
    let mut out: Vec<(Option<S>, usize)> = Vec::new();
    for d in draws {
        match seen.get(&d) {
            Some(&i) => out[i].1 += 1,
            None => {
                seen.insert(d.clone(), out.len());
                out.push((d, 1));
            }
        }
    }
    out
}

/// Support of the expected-`zeta` term at `state`.
///
/// Exact mode enumerates the law and fails on intractable ones. Sampled
/// mode keeps deterministic laws as they are and otherwise draws `L` fresh
/// next states for every action with positive probability.
pub fn prepare_plan<T, D, P, R>(
    dynamics: &D,
    policy: &P,
    state: &D::State,
    mode: EstimatorMode,
    rng: &mut R,
) -> Result<ExpectationPlan<D::State, T>>
where
    T: Scalar,
    D: Dynamics<T>,
    P: Policy<D::State, D::Action, T> + ?Sized,
    R: Rng + ?Sized,
{
    let mut branches = Vec::new();
    for (action, prob) in policy.distribution(state) {
        if prob <= T::zero() {
            continue;
        }
        let law = dynamics.next_law(state, &action)?;
        let outcomes = match (mode, law) {
            (EstimatorMode::PlainMc, _) => {
                return contract("plain Monte Carlo targets do not use a next-state expectation")
            }
            (_, NextLaw::Deterministic(next)) => Outcomes::Weighted(vec![(next, T::one())]),
            (EstimatorMode::AmpExact, NextLaw::Enumerable(support)) => Outcomes::Weighted(support),
            (EstimatorMode::AmpExact, NextLaw::Intractable(why)) => return Err(Error::Intractable(why)),
            (EstimatorMode::AmpSampled { samples }, _) => {
                if samples == 0 {
                    return contract("amp_sampled needs at least one sample");
                }
                let draws =
                    (0..samples).map(|_| dynamics.sample_next(state, &action, rng)).collect::<Result<Vec<_>>>()?;
                Outcomes::Sampled { draws: group_draws(draws), total: samples }
            }
        };
        branches.push(ActionBranch { prob, outcomes });
    }
    Ok(ExpectationPlan { branches })
}

pub fn prepare_plans<'a, T, D, P, R, I>(
    dynamics: &D,
    policy: &P,
    states: I,
    mode: EstimatorMode,
    rng: &mut R,
) -> Result<Vec<ExpectationPlan<D::State, T>>>
where
    T: Scalar,
    D: Dynamics<T>,
    D::State: 'a,
    P: Policy<D::State, D::Action, T> + ?Sized,
    R: Rng + ?Sized,
    I: IntoIterator<Item = &'a D::State>,
{
    states.into_iter().map(|s| prepare_plan(dynamics, policy, s, mode, rng)).collect()
}

fn zeta_of<S, T: Scalar, Z: ValueApproximation<S, T> + ?Sized>(zeta: &Z, s: &Option<S>) -> T {
    s.as_ref().map_or(T::zero(), |s| zeta.evaluate(s))
}

/// `sum_a pi(a) * E[zeta(next) | a]`, with `zeta = 0` past the horizon.
pub fn evaluate_plan<S, T, Z>(plan: &ExpectationPlan<S, T>, zeta: &Z) -> T
where
    T: Scalar,
    Z: ValueApproximation<S, T> + ?Sized,
{
    let mut total = T::zero();
    for branch in &plan.branches {
        let inner = match &branch.outcomes {
            Outcomes::Weighted(support) => support.iter().fold(T::zero(), |acc, (s, w)| acc + *w * zeta_of(zeta, s)),
            Outcomes::Sampled { draws, total } => {
                draws.iter().fold(T::zero(), |acc, (s, n)| acc + T::of_usize(*n) * zeta_of(zeta, s))
                    / T::of_usize(*total)
            }
        };
        total += branch.prob * inner;
    }
    total
}

pub fn evaluate_plans<S, T, Z>(plans: &[ExpectationPlan<S, T>], zeta: &Z) -> Vec<T>
where
    T: Scalar,
    Z: ValueApproximation<S, T> + ?Sized,
{
    plans.iter().map(|p| evaluate_plan(p, zeta)).collect()
}

/// Estimated variance of the sampled expectation around the exact one:
/// `sum_a pi(a)^2 s_a^2 / L` with `s_a^2` the unbiased sample variance of
/// `zeta` over the draws of action `a`. Exact branches contribute zero.
pub fn sampling_variance<S, T, Z>(plan: &ExpectationPlan<S, T>, zeta: &Z) -> T
where
    T: Scalar,
    Z: ValueApproximation<S, T> + ?Sized,
{
    let mut var = T::zero();
    for branch in &plan.branches {
        if let Outcomes::Sampled { draws, total } = &branch.outcomes {
            if *total < 2 {
                continue;
            }
            let l = T::of_usize(*total);
            let values: Vec<(T, T)> = draws.iter().map(|(s, n)| (zeta_of(zeta, s), T::of_usize(*n))).collect();
            let mean = values.iter().fold(T::zero(), |acc, (z, n)| acc + *n * *z) / l;
            let ss = values.iter().fold(T::zero(), |acc, (z, n)| acc + *n * (*z - mean) * (*z - mean));
            let s2 = ss / (l - T::one());
            var += branch.prob * branch.prob * s2 / l;
        }
    }
    var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_mqn::{MqnConfig, MqnState, Regime, StaticPriority, UniformFeasible};
    use crate::estimators::{FnValue, ZeroValue};
    use crate::rng::stream_rng;

    #[test]
    fn exact_plan_matches_hand_expectation() {
        let cfg = MqnConfig::for_regime(Regime::IL, 10);
        let zeta = FnValue { f: |s: &MqnState| s.q1 as f64 * 10.0 + s.q3 as f64, name: "lin".into() };
        let mut rng = stream_rng(0, &[]);
        let s = MqnState::new(1, 0, 0);
        let plan = prepare_plan(&cfg, &StaticPriority::class1_first(), &s, EstimatorMode::AmpExact, &mut rng).unwrap();
        // (2,0,0):0.3 -> 20, (1,1,0):0.3 -> 10, (0,0,1):2.0 -> 1, self 3.5 -> 10
        let want = (0.3 * 20.0 + 0.3 * 10.0 + 2.0 * 1.0 + 3.5 * 10.0) / 6.1;
        assert!((evaluate_plan(&plan, &zeta) - want).abs() < 1e-12);
    }

    #[test]
    fn plain_mode_is_rejected_and_zero_prob_actions_skipped() {
        let cfg = MqnConfig::for_regime(Regime::IL, 10);
        let mut rng = stream_rng(0, &[]);
        let s = MqnState::new(1, 1, 0);
        assert!(prepare_plan::<f64, _, _, _>(&cfg, &UniformFeasible, &s, EstimatorMode::PlainMc, &mut rng).is_err());
        let plan = prepare_plan::<f64, _, _, _>(&cfg, &UniformFeasible, &s, EstimatorMode::AmpExact, &mut rng).unwrap();
        assert_eq!(plan.branches.len(), 3);
        let plan = prepare_plan::<f64, _, _, _>(
            &cfg,
            &StaticPriority::class2_first(),
            &s,
            EstimatorMode::AmpSampled { samples: 50 },
            &mut rng,
        )
        .unwrap();
        assert_eq!(plan.branches.len(), 1);
        match &plan.branches[0].outcomes {
            Outcomes::Sampled { draws, total } => {
                assert_eq!(*total, 50);
                assert_eq!(draws.iter().map(|d| d.1).sum::<usize>(), 50);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(evaluate_plan(&plan, &ZeroValue), 0.0);
    }

    #[test]
    fn sampled_plan_is_seed_deterministic() {
        let cfg = MqnConfig::for_regime(Regime::IM, 10);
        let s = MqnState::new(2, 1, 3);
        let mk = || {
            let mut rng = stream_rng(42, &[1]);
            prepare_plan::<f64, _, _, _>(
                &cfg,
                &UniformFeasible,
                &s,
                EstimatorMode::AmpSampled { samples: 20 },
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(mk(), mk());
    }
}
