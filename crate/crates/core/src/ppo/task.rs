//! Environments as seen by the training loop.

use std::cell::RefCell;
use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;

use crate::approximator::{PolicyHead, ValueNet};
use crate::dynamics::Dynamics;
use crate::env_mqn::{self, MqnAction, MqnConfig, MqnState, MqnTrajectory};
use crate::env_ridehail::{self, RideHailConfig, RideHailState, RideTrajectory, SdmAction};
use crate::error::{Error, Result};
use crate::estimators::{
    centered_regenerative_targets, episodic_amp_backward, mqn_amp_from_expectations, reward_to_go, EstimatorMode,
    ValueApproximation,
};
use crate::policy::Policy;

/// An environment plus the encodings the networks need.
pub trait Task: Sync {
    type State: Clone + Eq + Hash + Send + Sync;
    type Action: Clone + Send + Sync;
    type Episode: Send + Sync;
    type Dyn: Dynamics<f64, State = Self::State, Action = Self::Action> + Sync;

    fn dynamics(&self) -> &Self::Dyn;
    /// True when the metric and targets are costs to be minimized.
    fn minimizes(&self) -> bool;
    fn num_actions(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn encode(&self, state: &Self::State) -> Vec<f64>;
    fn mask(&self, state: &Self::State) -> Vec<bool>;
    fn action(&self, index: usize) -> Self::Action;
    fn action_index(&self, action: &Self::Action) -> usize;

    fn simulate<P, R>(&self, policy: &P, rng: &mut R) -> Result<Self::Episode>
    where
        P: Policy<Self::State, Self::Action, f64> + ?Sized,
        R: Rng + ?Sized;

    /// Decision states in order with the chosen action index.
    fn decisions<'a>(&self, episode: &'a Self::Episode) -> Vec<(&'a Self::State, usize)>;

    /// Quantity subtracted from every per-step signal: the estimated average
    /// cost for average-cost tasks, zero otherwise.
    fn baseline(&self, episodes: &[&Self::Episode]) -> Result<f64>;

    /// Iteration metric: average cost, or mean matching rate.
    fn metric(&self, episodes: &[&Self::Episode]) -> Result<f64>;

    /// Value targets for one episode. `expected` holds the next-state
    /// expectations of `zeta` for AMP modes and is `None` for plain Monte Carlo.
    fn targets(
        &self,
        episode: &Self::Episode,
        zeta_here: &[f64],
        expected: Option<&[f64]>,
        baseline: f64,
        mode: EstimatorMode,
    ) -> Result<Vec<f64>>;
}

/// Softmax policy over the task's action templates.
pub struct NeuralPolicy<'a, K> {
    pub head: &'a PolicyHead<f64>,
    pub task: &'a K,
}

impl<K: Task> Policy<K::State, K::Action, f64> for NeuralPolicy<'_, K> {
    fn distribution(&self, state: &K::State) -> Vec<(K::Action, f64)> {
        match self.head.probabilities(&self.task.encode(state), &self.task.mask(state)) {
            Ok(p) => {
                p.into_iter().enumerate().filter(|(_, p)| *p > 0.0).map(|(i, p)| (self.task.action(i), p)).collect()
            }
            Err(_) => Vec::new(),
        }
    }
}

/// `zeta` for the training loop: zero in the first iteration, the previous
/// value net afterwards. Evaluations are memoized per instance.
pub struct Zeta<'a, K: Task> {
    net: Option<&'a ValueNet<f64>>,
    task: &'a K,
    cache: RefCell<HashMap<K::State, f64>>,
}

impl<'a, K: Task> Zeta<'a, K> {
    pub fn new(net: Option<&'a ValueNet<f64>>, task: &'a K) -> Self {
        Zeta { net, task, cache: RefCell::new(HashMap::new()) }
    }

    pub fn from_features(&self, features: &[f64]) -> f64 {
        match self.net {
            None => 0.0,
            Some(net) => net.predict(features).unwrap_or(f64::NAN),
        }
    }
}

impl<K: Task> ValueApproximation<K::State, f64> for Zeta<'_, K> {
    fn evaluate(&self, state: &K::State) -> f64 {
        let Some(net) = self.net else { return 0.0 };
        if let Some(v) = self.cache.borrow().get(state) {
            return *v;
        }
        let v = net.predict(&self.task.encode(state)).unwrap_or(f64::NAN);
        self.cache.borrow_mut().insert(state.clone(), v);
        v
    }

    fn descriptor(&self) -> String {
        if self.net.is_some() {
            "previous value net".into()
        } else {
            "zero".into()
        }
    }
}

/// Criss-Cross network; features are the three queue lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct MqnTask {
    pub cfg: MqnConfig,
}

impl Task for MqnTask {
    type State = MqnState;
    type Action = MqnAction;
    type Episode = MqnTrajectory;
    type Dyn = MqnConfig;

    fn dynamics(&self) -> &MqnConfig {
        &self.cfg
    }

    fn minimizes(&self) -> bool {
        true
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn feature_dim(&self) -> usize {
        3
    }

    fn encode(&self, s: &MqnState) -> Vec<f64> {
        vec![s.q1 as f64, s.q2 as f64, s.q3 as f64]
    }

    fn mask(&self, s: &MqnState) -> Vec<bool> {
        env_mqn::action_mask(s).to_vec()
    }

    fn action(&self, index: usize) -> MqnAction {
        MqnAction::ALL[index]
    }

    fn action_index(&self, a: &MqnAction) -> usize {
        a.index()
    }

    fn simulate<P, R>(&self, policy: &P, rng: &mut R) -> Result<MqnTrajectory>
    where
        P: Policy<MqnState, MqnAction, f64> + ?Sized,
        R: Rng + ?Sized,
    {
        env_mqn::simulate_mqn_episode(policy, &self.cfg, rng)
    }

    fn decisions<'a>(&self, ep: &'a MqnTrajectory) -> Vec<(&'a MqnState, usize)> {
        ep.states.iter().zip(&ep.actions).map(|(s, a)| (s, a.index())).collect()
    }

    fn baseline(&self, eps: &[&MqnTrajectory]) -> Result<f64> {
        let steps: usize = eps.iter().map(|t| t.costs.len()).sum();
        if steps == 0 {
            return Err(Error::Contract("average cost needs at least one step".into()));
        }
        let total: u64 = eps.iter().flat_map(|t| t.costs.iter()).map(|&c| c as u64).sum();
        Ok(total as f64 / steps as f64)
    }

    fn metric(&self, eps: &[&MqnTrajectory]) -> Result<f64> {
        self.baseline(eps)
    }

    fn targets(
        &self,
        ep: &MqnTrajectory,
        zeta_here: &[f64],
        expected: Option<&[f64]>,
        baseline: f64,
        mode: EstimatorMode,
    ) -> Result<Vec<f64>> {
        Ok(match expected {
            None => centered_regenerative_targets(ep, baseline)?.values(),
            Some(e) => mqn_amp_from_expectations(ep, zeta_here, e, baseline, mode)?.values(),
        })
    }
}

/// Ride-hailing dispatch. Features: epoch and step progress, the region of
/// the car being assigned, open requests per origin-destination pair, and
/// per region the cars still to be assigned this epoch and the busy cars
/// heading there.
#[derive(Debug, Clone, PartialEq)]
pub struct RideTask {
    pub cfg: RideHailConfig,
}

impl Task for RideTask {
    type State = RideHailState;
    type Action = SdmAction;
    type Episode = RideTrajectory;
    type Dyn = RideHailConfig;

    fn dynamics(&self) -> &RideHailConfig {
        &self.cfg
    }

    fn minimizes(&self) -> bool {
        false
    }

    fn num_actions(&self) -> usize {
        self.cfg.action_count()
    }

    fn feature_dim(&self) -> usize {
        let r = self.cfg.regions;
        2 + r + r * r + 2 * r
    }

    fn encode(&self, s: &RideHailState) -> Vec<f64> {
        let r = self.cfg.regions;
        let mut x = vec![0.0; self.feature_dim()];
        x[0] = s.epoch as f64 / s.horizon.max(1) as f64;
        x[1] = s.cursor as f64 / s.available.len().max(1) as f64;
        if let Some(car) = s.cursor_car() {
            x[2 + car.region] = 1.0;
        }
        let req = 2 + r;
        for q in &s.requests {
            x[req + q.origin * r + q.destination] += 1.0;
        }
        let free = req + r * r;
        for &c in s.available.iter().skip(s.cursor + 1) {
            x[free + s.cars[c].region] += 1.0;
        }
        let busy = free + r;
        for car in s.cars.iter().filter(|c| c.busy_until > s.epoch) {
            x[busy + car.region] += 1.0;
        }
        x
    }

    fn mask(&self, s: &RideHailState) -> Vec<bool> {
        env_ridehail::action_mask(&self.cfg, s)
    }

    fn action(&self, index: usize) -> SdmAction {
        SdmAction::from_index(index, self.cfg.regions)
    }

    fn action_index(&self, a: &SdmAction) -> usize {
        a.index(self.cfg.regions)
    }

    fn simulate<P, R>(&self, policy: &P, rng: &mut R) -> Result<RideTrajectory>
    where
        P: Policy<RideHailState, SdmAction, f64> + ?Sized,
        R: Rng + ?Sized,
    {
        env_ridehail::simulate_ride_episode(policy, &self.cfg, rng)
    }

    fn decisions<'a>(&self, ep: &'a RideTrajectory) -> Vec<(&'a RideHailState, usize)> {
        ep.steps.iter().map(|s| (&s.state, s.action.index(self.cfg.regions))).collect()
    }

    fn baseline(&self, _: &[&RideTrajectory]) -> Result<f64> {
        Ok(0.0)
    }

    fn metric(&self, eps: &[&RideTrajectory]) -> Result<f64> {
        if eps.is_empty() {
            return Ok(0.0);
        }
        Ok(eps.iter().map(|e| e.matching_rate()).sum::<f64>() / eps.len() as f64)
    }

    fn targets(
        &self,
        ep: &RideTrajectory,
        zeta_here: &[f64],
        expected: Option<&[f64]>,
        _baseline: f64,
        _mode: EstimatorMode,
    ) -> Result<Vec<f64>> {
        let rewards: Vec<f64> = ep.steps.iter().map(|s| s.reward as f64).collect();
        match expected {
            None => Ok(reward_to_go(&rewards)),
            Some(e) => episodic_amp_backward(&rewards, zeta_here, e),
        }
    }
}
