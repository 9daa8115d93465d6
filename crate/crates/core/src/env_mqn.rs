//! Uniformized Criss-Cross multiclass queueing network.
//!
//! Classes 1 and 2 arrive exogenously and share server A; a class-1
//! completion turns into a class-3 job at server B; class-2 and class-3
//! completions leave the network. The action picks what server A works on,
//! while server B always serves class 3 when it has work.
//!
//! Time is discrete: each step is one event of the uniformized chain with
//! total rate `B = lambda1 + lambda2 + mu1 + mu2 + mu3`. An event whose
//! activity is inactive (an idle service clock, or an arrival into a full
//! buffer when a cap is configured) leaves the state unchanged.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Dynamics, NextLaw};
use crate::error::{Error, Result};
use crate::policy::{sample_action, Policy};
use crate::rng::sample_index;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Imbalanced, low traffic.
    IL,
    /// Imbalanced, medium traffic.
    IM,
    /// Balanced, low traffic.
    BL,
    /// Balanced, medium traffic.
    BM,
    #[serde(rename = "custom")]
    Custom,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::IL => "IL",
            Regime::IM => "IM",
            Regime::BL => "BL",
            Regime::BM => "BM",
            Regime::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MqnConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub regime: Regime,
    /// Number of transitions per episode.
    pub episode_length: usize,
    /// Optional per-class buffer size; arrivals into a full buffer are lost.
    #[serde(default)]
    pub buffer_cap: Option<u32>,
}

impl MqnConfig {
    /// Default rates for a named regime. `Custom` falls back to the IL rates.
    pub fn for_regime(regime: Regime, episode_length: usize) -> Self {
        let (lambda, mu3) = match regime {
            Regime::IL | Regime::Custom => (0.3, 1.5),
            Regime::IM => (0.6, 1.5),
            // mu3 set so that station B carries the same load as station A.
            Regime::BL => (0.3, 1.0),
            Regime::BM => (0.6, 1.0),
        };
        MqnConfig {
            lambda1: lambda,
            lambda2: lambda,
            mu1: 2.0,
            mu2: 2.0,
            mu3,
            regime,
            episode_length,
            buffer_cap: None,
        }
    }

    pub fn with_cap(mut self, cap: u32) -> Self {
        self.buffer_cap = Some(cap);
        self
    }

    /// Total event rate `B` of the uniformized chain.
    pub fn uniformization_constant(&self) -> f64 {
        self.lambda1 + self.lambda2 + self.mu1 + self.mu2 + self.mu3
    }

    /// Station loads `(rho_A, rho_B)`.
    pub fn loads(&self) -> (f64, f64) {
        (self.lambda1 / self.mu1 + self.lambda2 / self.mu2, self.lambda1 / self.mu3)
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("mu3", self.mu3),
        ];
        for (name, r) in rates {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!("{name} must be a positive finite rate, got {r}")));
            }
        }
        let (rho_a, rho_b) = self.loads();
        if rho_a >= 1.0 || rho_b >= 1.0 {
            return Err(Error::Config(format!(
                "unstable network: station loads ({rho_a:.4}, {rho_b:.4}) must both be < 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct MqnState {
    pub q1: u32,
    pub q2: u32,
    pub q3: u32,
}

impl MqnState {
    pub const EMPTY: MqnState = MqnState { q1: 0, q2: 0, q3: 0 };

    pub fn new(q1: u32, q2: u32, q3: u32) -> Self {
        MqnState { q1, q2, q3 }
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::EMPTY
    }

    /// Holding cost: total number of jobs in the network.
    pub fn cost(&self) -> u32 {
        self.q1 + self.q2 + self.q3
    }
}

impl fmt::Display for MqnState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.q1, self.q2, self.q3)
    }
}

/// What server A works on during the next event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MqnAction {
    ServeClass1,
    ServeClass2,
    Idle,
}

impl MqnAction {
    pub const ALL: [MqnAction; 3] = [MqnAction::ServeClass1, MqnAction::ServeClass2, MqnAction::Idle];

    pub fn index(self) -> usize {
        match self {
            MqnAction::ServeClass1 => 0,
            MqnAction::ServeClass2 => 1,
            MqnAction::Idle => 2,
        }
    }

    pub fn is_valid(self, state: &MqnState) -> bool {
        match self {
            MqnAction::ServeClass1 => state.q1 > 0,
            MqnAction::ServeClass2 => state.q2 > 0,
            MqnAction::Idle => true,
        }
    }
}

/// Feasibility mask indexed by [`MqnAction::index`].
pub fn action_mask(state: &MqnState) -> [bool; 3] {
    MqnAction::ALL.map(|a| a.is_valid(state))
}

fn check_action(state: &MqnState, action: MqnAction) -> Result<()> {
    if action.is_valid(state) {
        Ok(())
    } else {
        Err(Error::Infeasible(format!("{action:?} at state {state} serves an empty class")))
    }
}

/// Exact one-step distribution of the uniformized chain.
///
/// Non-self transitions come first in activity order (arrival 1, arrival 2,
/// server A completion, server B completion); the merged self-loop, if any,
/// comes last and carries `1 - (sum of the others)`, so that summing the
/// returned probabilities front to back gives exactly one.
pub fn transition_distribution<T: Scalar>(
    state: &MqnState,
    action: MqnAction,
    cfg: &MqnConfig,
) -> Result<Vec<(MqnState, T)>> {
    check_action(state, action)?;
    let b = T::of(cfg.uniformization_constant());
    let room = |q: u32| cfg.buffer_cap.is_none_or(|cap| q < cap);
    let s = *state;

    let mut moves: Vec<(MqnState, T)> = Vec::with_capacity(5);
    if room(s.q1) {
        moves.push((MqnState { q1: s.q1 + 1, ..s }, T::of(cfg.lambda1) / b));
    }
    if room(s.q2) {
        moves.push((MqnState { q2: s.q2 + 1, ..s }, T::of(cfg.lambda2) / b));
    }
    match action {
        MqnAction::ServeClass1 if room(s.q3) => {
            moves.push((MqnState { q1: s.q1 - 1, q3: s.q3 + 1, ..s }, T::of(cfg.mu1) / b));
        }
        MqnAction::ServeClass2 => {
            moves.push((MqnState { q2: s.q2 - 1, ..s }, T::of(cfg.mu2) / b));
        }
        _ => {}
    }
    if s.q3 > 0 {
        moves.push((MqnState { q3: s.q3 - 1, ..s }, T::of(cfg.mu3) / b));
    }

    let moved = moves.iter().fold(T::zero(), |acc, (_, p)| acc + *p);
    let stay = T::one() - moved;
    if stay > T::zero() {
        moves.push((s, stay));
    }
    Ok(moves)
}

/// Sample the next state of the uniformized chain.
pub fn sample_next_state<R: Rng + ?Sized>(
    state: &MqnState,
    action: MqnAction,
    cfg: &MqnConfig,
    rng: &mut R,
) -> Result<MqnState> {
    let dist = transition_distribution::<f64>(state, action, cfg)?;
    let probs: Vec<f64> = dist.iter().map(|(_, p)| *p).collect();
    Ok(dist[sample_index(&probs, rng)].0)
}

/// One transition; the cost is charged at the pre-transition state.
pub fn mqn_step<R: Rng + ?Sized>(
    state: &MqnState,
    action: MqnAction,
    cfg: &MqnConfig,
    rng: &mut R,
) -> Result<(MqnState, u32)> {
    let next = sample_next_state(state, action, cfg, rng)?;
    Ok((next, state.cost()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MqnTrajectory {
    /// `episode_length + 1` visited states, starting from the empty network.
    pub states: Vec<MqnState>,
    pub actions: Vec<MqnAction>,
    pub costs: Vec<u32>,
    /// Positions in `states` where the network is empty.
    pub regen_indices: Vec<usize>,
}

impl MqnTrajectory {
    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.actions.len();
        if self.states.len() != n + 1 || self.costs.len() != n {
            return Err(Error::Contract(format!(
                "trajectory shape: {} states, {} actions, {} costs",
                self.states.len(),
                n,
                self.costs.len()
            )));
        }
        let expected: Vec<usize> = regeneration_points(&self.states);
        if expected != self.regen_indices {
            return Err(Error::Contract("regen_indices do not match the empty-state visits".into()));
        }
        Ok(())
    }
}

fn regeneration_points(states: &[MqnState]) -> Vec<usize> {
    states.iter().enumerate().filter(|(_, s)| s.is_empty()).map(|(i, _)| i).collect()
}

/// Roll out one episode from the empty network.
pub fn simulate_mqn_episode<T, P, R>(policy: &P, cfg: &MqnConfig, rng: &mut R) -> Result<MqnTrajectory>
where
    T: Scalar,
    P: Policy<MqnState, MqnAction, T> + ?Sized,
    R: Rng + ?Sized,
{
    let n = cfg.episode_length;
    let mut states = Vec::with_capacity(n + 1);
    let mut actions = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    let mut state = MqnState::EMPTY;
    states.push(state);
    for step in 0..n {
        let action = sample_action(policy, &state, rng)
            .ok_or_else(|| Error::Infeasible(format!("step {step}: policy returned no actions at {state}")))?;
        if !action.is_valid(&state) {
            return Err(Error::Infeasible(format!("step {step}: policy chose {action:?} at state {state}")));
        }
        let (next, cost) = mqn_step(&state, action, cfg, rng)?;
        actions.push(action);
        costs.push(cost);
        states.push(next);
        state = next;
    }
    let regen_indices = regeneration_points(&states);
    Ok(MqnTrajectory { states, actions, costs, regen_indices })
}

impl<T: Scalar> Dynamics<T> for MqnConfig {
    type State = MqnState;
    type Action = MqnAction;

    fn next_law(&self, state: &MqnState, action: &MqnAction) -> Result<NextLaw<MqnState, T>> {
        let dist = transition_distribution::<T>(state, *action, self)?;
        Ok(NextLaw::Enumerable(dist.into_iter().map(|(s, p)| (Some(s), p)).collect()))
    }

    fn sample_next<R: Rng + ?Sized>(
        &self,
        state: &MqnState,
        action: &MqnAction,
        rng: &mut R,
    ) -> Result<Option<MqnState>> {
        sample_next_state(state, *action, self, rng).map(Some)
    }
}

/// Static priority rule at server A: serve the preferred class whenever it
/// has jobs, otherwise the other class, otherwise idle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StaticPriority {
    pub first: MqnAction,
}

impl StaticPriority {
    pub fn class1_first() -> Self {
        StaticPriority { first: MqnAction::ServeClass1 }
    }

    pub fn class2_first() -> Self {
        StaticPriority { first: MqnAction::ServeClass2 }
    }

    pub fn choose(&self, s: &MqnState) -> MqnAction {
        let second = match self.first {
            MqnAction::ServeClass2 => MqnAction::ServeClass1,
            _ => MqnAction::ServeClass2,
        };
        [self.first, second].into_iter().find(|a| a.is_valid(s)).unwrap_or(MqnAction::Idle)
    }
}

impl<T: Scalar> Policy<MqnState, MqnAction, T> for StaticPriority {
    fn distribution(&self, state: &MqnState) -> Vec<(MqnAction, T)> {
        vec![(self.choose(state), T::one())]
    }
}

/// Uniform over the feasible actions (idling included).
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformFeasible;

impl<T: Scalar> Policy<MqnState, MqnAction, T> for UniformFeasible {
    fn distribution(&self, state: &MqnState) -> Vec<(MqnAction, T)> {
        let feasible: Vec<MqnAction> = MqnAction::ALL.into_iter().filter(|a| a.is_valid(state)).collect();
        let p = T::one() / T::of_usize(feasible.len());
        feasible.into_iter().map(|a| (a, p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;

    fn il() -> MqnConfig {
        MqnConfig::for_regime(Regime::IL, 100)
    }

    /// Independent enumeration of the five activities, self-loops merged.
    fn enumerate_activities(s: MqnState, a: MqnAction, cfg: &MqnConfig) -> Vec<(MqnState, f64)> {
        let b = cfg.uniformization_constant();
        let mut out: Vec<(MqnState, f64)> = Vec::new();
        let mut add = |n: MqnState, r: f64| match out.iter_mut().find(|(m, _)| *m == n) {
            Some(e) => e.1 += r / b,
            None => out.push((n, r / b)),
        };
        add(MqnState::new(s.q1 + 1, s.q2, s.q3), cfg.lambda1);
        add(MqnState::new(s.q1, s.q2 + 1, s.q3), cfg.lambda2);
        if a == MqnAction::ServeClass1 {
            add(MqnState::new(s.q1 - 1, s.q2, s.q3 + 1), cfg.mu1);
        } else {
            add(s, cfg.mu1);
        }
        if a == MqnAction::ServeClass2 {
            add(MqnState::new(s.q1, s.q2 - 1, s.q3), cfg.mu2);
        } else {
            add(s, cfg.mu2);
        }
        if s.q3 > 0 {
            add(MqnState::new(s.q1, s.q2, s.q3 - 1), cfg.mu3);
        } else {
            add(s, cfg.mu3);
        }
        out
    }

    fn prob_of(dist: &[(MqnState, f64)], s: MqnState) -> f64 {
        dist.iter().filter(|(n, _)| *n == s).map(|(_, p)| *p).sum()
    }

    #[test]
    fn empty_network_idle() {
        let cfg = il();
        let d = transition_distribution::<f64>(&MqnState::EMPTY, MqnAction::Idle, &cfg).unwrap();
        assert_eq!(d.len(), 3);
        assert_abs_diff_eq!(prob_of(&d, MqnState::new(1, 0, 0)), 0.3 / 6.1, epsilon = 1e-15);
        assert_abs_diff_eq!(prob_of(&d, MqnState::new(0, 1, 0)), 0.3 / 6.1, epsilon = 1e-15);
        assert_abs_diff_eq!(prob_of(&d, MqnState::EMPTY), 5.5 / 6.1, epsilon = 1e-15);
    }

    #[test]
    fn serve_class1_routes_to_queue3() {
        let cfg = il();
        let s = MqnState::new(1, 0, 0);
        let d = transition_distribution::<f64>(&s, MqnAction::ServeClass1, &cfg).unwrap();
        assert_eq!(d.len(), 4);
        assert_abs_diff_eq!(prob_of(&d, MqnState::new(2, 0, 0)), 0.3 / 6.1, epsilon = 1e-15);
        assert_abs_diff_eq!(prob_of(&d, MqnState::new(1, 1, 0)), 0.3 / 6.1, epsilon = 1e-15);
        assert_abs_diff_eq!(prob_of(&d, MqnState::new(0, 0, 1)), 2.0 / 6.1, epsilon = 1e-15);
        assert_abs_diff_eq!(prob_of(&d, s), 3.5 / 6.1, epsilon = 1e-15);
    }

    #[test]
    fn serving_empty_class_is_rejected() {
        let cfg = il();
        let err = transition_distribution::<f64>(&MqnState::new(0, 3, 1), MqnAction::ServeClass1, &cfg);
        assert!(matches!(err, Err(Error::Infeasible(_))));
    }

    #[test]
    fn exhaustive_sweep_sums_to_one_and_matches_enumeration() {
        for cfg in [il(), MqnConfig::for_regime(Regime::BM, 1)] {
            for q1 in 0..=20 {
                for q2 in 0..=20 {
                    for q3 in 0..=20 {
                        let s = MqnState::new(q1, q2, q3);
                        for a in MqnAction::ALL.into_iter().filter(|a| a.is_valid(&s)) {
                            let d = transition_distribution::<f64>(&s, a, &cfg).unwrap();
                            let total: f64 = d.iter().map(|(_, p)| *p).sum();
                            assert_eq!(total, 1.0, "state {s} action {a:?}");
                            let oracle = enumerate_activities(s, a, &cfg);
                            for (n, p) in &oracle {
                                assert_abs_diff_eq!(prob_of(&d, *n), *p, epsilon = 1e-14);
                            }
                            for (n, _) in &d {
                                let dq =
                                    [n.q1 as i64 - s.q1 as i64, n.q2 as i64 - s.q2 as i64, n.q3 as i64 - s.q3 as i64];
                                let l1: i64 = dq.iter().map(|x| x.abs()).sum();
                                assert!(l1 <= 1 || dq == [-1, 0, 1], "jump {dq:?}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sums_to_one_in_f32() {
        let cfg = il();
        let d = transition_distribution::<f32>(&MqnState::new(2, 2, 2), MqnAction::ServeClass2, &cfg).unwrap();
        assert_eq!(d.iter().map(|(_, p)| *p).sum::<f32>(), 1.0);
    }

    #[test]
    fn capped_buffers_self_loop() {
        let cfg = il().with_cap(2);
        let s = MqnState::new(2, 1, 2);
        let d = transition_distribution::<f64>(&s, MqnAction::ServeClass1, &cfg).unwrap();
        // arrival 1 blocked, class-1 completion blocked by the full class-3 buffer
        assert!(d.iter().all(|(n, _)| n.q1 <= 2 && n.q2 <= 2 && n.q3 <= 2));
        assert_abs_diff_eq!(prob_of(&d, s), (0.3 + 2.0 + 2.0) / 6.1, epsilon = 1e-15);
        assert_eq!(d.iter().map(|(_, p)| *p).sum::<f64>(), 1.0);
    }

    #[test]
    fn step_costs() {
        let cfg = il();
        let mut rng = stream_rng(3, &[]);
        let (_, c) = mqn_step(&MqnState::EMPTY, MqnAction::Idle, &cfg, &mut rng).unwrap();
        assert_eq!(c, 0);
        let (_, c) = mqn_step(&MqnState::new(2, 1, 3), MqnAction::ServeClass2, &cfg, &mut rng).unwrap();
        assert_eq!(c, 6);
    }

    #[test]
    fn empirical_frequencies_within_three_sigma() {
        let cfg = il();
        let s = MqnState::new(1, 2, 1);
        let a = MqnAction::ServeClass1;
        let d = transition_distribution::<f64>(&s, a, &cfg).unwrap();
        let n = 100_000usize;
        let mut counts = vec![0usize; d.len()];
        let mut rng = stream_rng(11, &[]);
        for _ in 0..n {
            let next = sample_next_state(&s, a, &cfg, &mut rng).unwrap();
            let i = d.iter().position(|(m, _)| *m == next).unwrap();
            counts[i] += 1;
        }
        for ((_, p), c) in d.iter().zip(&counts) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "p={p} count={c}");
        }
    }

    #[test]
    fn zero_length_episode() {
        let mut cfg = il();
        cfg.episode_length = 0;
        let mut rng = stream_rng(0, &[]);
        let traj = simulate_mqn_episode::<f64, _, _>(&StaticPriority::class1_first(), &cfg, &mut rng).unwrap();
        assert_eq!(traj.states, vec![MqnState::EMPTY]);
        assert!(traj.actions.is_empty());
        assert_eq!(traj.regen_indices, vec![0]);
    }

    #[test]
    fn regeneration_and_determinism() {
        let cfg = il();
        let run = |seed| {
            let mut rng = stream_rng(seed, &[]);
            simulate_mqn_episode::<f64, _, _>(&UniformFeasible, &cfg, &mut rng).unwrap()
        };
        let a = run(5);
        assert_eq!(a, run(5));
        a.validate().unwrap();
        for (i, s) in a.states.iter().enumerate() {
            assert_eq!(s.is_empty(), a.regen_indices.contains(&i));
        }
        for (s, c) in a.states.iter().zip(&a.costs) {
            assert_eq!(s.cost(), *c);
        }
    }

    #[test]
    fn rate_scaling_leaves_trajectories_unchanged() {
        let cfg = il();
        let mut scaled = cfg.clone();
        for r in [&mut scaled.lambda1, &mut scaled.lambda2, &mut scaled.mu1, &mut scaled.mu2, &mut scaled.mu3] {
            *r *= 4.0;
        }
        let mut r1 = stream_rng(9, &[]);
        let mut r2 = stream_rng(9, &[]);
        let a = simulate_mqn_episode::<f64, _, _>(&UniformFeasible, &cfg, &mut r1).unwrap();
        let b = simulate_mqn_episode::<f64, _, _>(&UniformFeasible, &scaled, &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_policy_action_reports_step() {
        let cfg = il();
        let bad = crate::policy::FnPolicy(|_: &MqnState| vec![(MqnAction::ServeClass2, 1.0f64)]);
        let mut rng = stream_rng(0, &[]);
        let err = simulate_mqn_episode(&bad, &cfg, &mut rng).unwrap_err();
        assert!(err.to_string().contains("step 0"), "{err}");
    }

    #[test]
    fn regime_defaults_are_stable() {
        for r in [Regime::IL, Regime::IM, Regime::BL, Regime::BM] {
            MqnConfig::for_regime(r, 10).validate().unwrap();
        }
        let (a, b) = MqnConfig::for_regime(Regime::BL, 1).loads();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        let mut bad = il();
        bad.lambda1 = 1.9;
        assert!(bad.validate().is_err());
        bad.lambda1 = 0.0;
        assert!(bad.validate().is_err());
    }
}
