//! Small ride-hailing dispatch MDP with epoch / sequential-decision structure.
//!
//! An episode has `horizon` epochs. At the start of epoch `t` the cars that
//! are free (`busy_until <= t`) are listed in index order and each gets
//! exactly one sequential decision step: match it to an open request that
//! originates in its current region, or hold. Within an epoch every step is
//! deterministic given the action. Between epochs, unmatched requests past
//! their patience expire and new requests arrive as independent Poisson
//! counts per origin-destination pair.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Dynamics, NextLaw};
use crate::error::{contract, Error, Result};
use crate::policy::{sample_action, Policy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RideHailConfig {
    pub regions: usize,
    pub n_cars: usize,
    /// Epochs per episode.
    pub horizon: u32,
    /// `arrival_rates[o][d]`: mean new requests per epoch from `o` to `d`.
    pub arrival_rates: Vec<Vec<f64>>,
    /// `travel_time[o][d]`: epochs a trip from `o` to `d` keeps a car busy.
    pub travel_time: Vec<Vec<u32>>,
    /// Epochs an unmatched request stays open after the epoch it arrives in.
    pub patience: u32,
}

impl Default for RideHailConfig {
    fn default() -> Self {
        Self::uniform(5, 20, 60, 0.2)
    }
}

impl RideHailConfig {
    /// Every OD pair gets the same rate; travel time `1 + |o - d|`.
    pub fn uniform(regions: usize, n_cars: usize, horizon: u32, rate: f64) -> Self {
        RideHailConfig {
            regions,
            n_cars,
            horizon,
            arrival_rates: vec![vec![rate; regions]; regions],
            travel_time: (0..regions).map(|o| (0..regions).map(|d| 1 + o.abs_diff(d) as u32).collect()).collect(),
            patience: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.regions;
        if r == 0 {
            return Err(Error::Config("regions must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.arrival_rates.len() != r || self.arrival_rates.iter().any(|row| row.len() != r) {
            return Err(Error::Config(format!("arrival_rates must be {r}x{r}")));
        }
        if self.travel_time.len() != r || self.travel_time.iter().any(|row| row.len() != r) {
            return Err(Error::Config(format!("travel_time must be {r}x{r}")));
        }
        for (o, row) in self.arrival_rates.iter().enumerate() {
            for (d, &x) in row.iter().enumerate() {
                if !(x.is_finite() && x >= 0.0) {
                    return Err(Error::Config(format!("arrival_rates[{o}][{d}] = {x} must be >= 0")));
                }
            }
        }
        for (o, row) in self.travel_time.iter().enumerate() {
            for (d, &x) in row.iter().enumerate() {
                if x == 0 {
                    return Err(Error::Config(format!("travel_time[{o}][{d}] must be >= 1")));
                }
            }
        }
        Ok(())
    }

    /// Number of action templates: one per OD pair plus hold.
    pub fn action_count(&self) -> usize {
        self.regions * self.regions + 1
    }

    pub fn total_rate(&self) -> f64 {
        self.arrival_rates.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Car {
    pub region: usize,
    /// First epoch at which the car is free again.
    pub busy_until: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Request {
    pub origin: usize,
    pub destination: usize,
    /// Last epoch in which the request can be matched.
    pub expiry: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RideHailState {
    /// Current epoch, `1..=horizon`.
    pub epoch: u32,
    pub cars: Vec<Car>,
    /// Open requests, kept sorted.
    pub requests: Vec<Request>,
    /// Indices of the cars that were free at the start of this epoch.
    pub available: Vec<usize>,
    /// Position in `available` of the car being assigned.
    pub cursor: usize,
    pub horizon: u32,
}

impl RideHailState {
    /// 1-based index of the current sequential decision step.
    pub fn sdm_step(&self) -> usize {
        self.cursor + 1
    }

    /// All free cars of this epoch have been assigned.
    pub fn epoch_end_pending(&self) -> bool {
        self.cursor >= self.available.len()
    }

    /// Nothing left to decide in this episode.
    pub fn is_terminal(&self) -> bool {
        self.epoch_end_pending() && self.epoch >= self.horizon
    }

    /// `I_t`: number of decision steps in the current epoch.
    pub fn steps_in_epoch(&self) -> usize {
        self.available.len()
    }

    pub fn is_last_step(&self) -> bool {
        self.cursor + 1 == self.available.len()
    }

    pub fn cursor_car(&self) -> Option<&Car> {
        self.available.get(self.cursor).map(|&c| &self.cars[c])
    }

    pub fn request_count(&self, origin: usize, destination: usize) -> usize {
        self.requests.iter().filter(|r| r.origin == origin && r.destination == destination).count()
    }

    fn start_epoch(&mut self, epoch: u32) {
        self.epoch = epoch;
        self.available = (0..self.cars.len()).filter(|&c| self.cars[c].busy_until <= epoch).collect();
        self.cursor = 0;
    }
}

impl fmt::Display for RideHailState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(t={}, i={}, open={})", self.epoch, self.sdm_step(), self.requests.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SdmAction {
    Match { origin: usize, destination: usize },
    Hold,
}

impl SdmAction {
    /// Template index: `origin * regions + destination`, hold last.
    pub fn index(&self, regions: usize) -> usize {
        match *self {
            SdmAction::Match { origin, destination } => origin * regions + destination,
            SdmAction::Hold => regions * regions,
        }
    }

    pub fn from_index(index: usize, regions: usize) -> SdmAction {
        if index >= regions * regions {
            SdmAction::Hold
        } else {
            SdmAction::Match { origin: index / regions, destination: index % regions }
        }
    }
}

/// Feasibility of every action template at `state`.
pub fn action_mask(cfg: &RideHailConfig, state: &RideHailState) -> Vec<bool> {
    let r = cfg.regions;
    let mut mask = vec![false; r * r + 1];
    mask[r * r] = true;
    if let Some(car) = state.cursor_car() {
        for req in state.requests.iter().filter(|q| q.origin == car.region) {
            mask[req.origin * r + req.destination] = true;
        }
    }
    mask
}

fn draw_requests<R: Rng + ?Sized>(cfg: &RideHailConfig, epoch: u32, out: &mut Vec<Request>, rng: &mut R) -> usize {
    let mut born = 0;
    for (o, row) in cfg.arrival_rates.iter().enumerate() {
        for (d, &rate) in row.iter().enumerate() {
            if rate <= 0.0 {
                continue;
            }
            let n = Poisson::new(rate).expect("validated positive rate").sample(rng) as usize;
            for _ in 0..n {
                out.push(Request { origin: o, destination: d, expiry: epoch + cfg.patience });
            }
            born += n;
        }
    }
    born
}

/// Epoch-1 state: all cars free, cars spread over regions round-robin,
/// first batch of requests drawn. Returns the state and the request count.
pub fn initial_state<R: Rng + ?Sized>(cfg: &RideHailConfig, rng: &mut R) -> Result<(RideHailState, usize)> {
    cfg.validate()?;
    let cars = (0..cfg.n_cars).map(|c| Car { region: c % cfg.regions, busy_until: 1 }).collect();
    let mut requests = Vec::new();
    let born = draw_requests(cfg, 1, &mut requests, rng);
    requests.sort_unstable();
    let mut state = RideHailState { epoch: 1, cars, requests, available: Vec::new(), cursor: 0, horizon: cfg.horizon };
    state.start_epoch(1);
    Ok((state, born))
}

/// Apply one sequential decision. Deterministic.
pub fn sdm_step(cfg: &RideHailConfig, state: &RideHailState, action: SdmAction) -> Result<(RideHailState, u8)> {
    if state.epoch_end_pending() {
        return contract(format!("sdm_step called at epoch-end state {state}"));
    }
    let car_idx = state.available[state.cursor];
    let mut next = state.clone();
    let reward = match action {
        SdmAction::Hold => 0,
        SdmAction::Match { origin, destination } => {
            let car = state.cars[car_idx];
            if origin >= cfg.regions || destination >= cfg.regions {
                return Err(Error::Infeasible(format!("match({origin},{destination}) outside region range")));
            }
            if car.region != origin {
                return Err(Error::Infeasible(format!(
                    "car {car_idx} is in region {} and cannot pick up in region {origin}",
                    car.region
                )));
            }
            // requests are sorted, so this is the earliest-expiring one
            let pos = next
                .requests
                .iter()
                .position(|r| r.origin == origin && r.destination == destination)
                .ok_or_else(|| Error::Infeasible(format!("no open request ({origin},{destination})")))?;
            next.requests.remove(pos);
            next.cars[car_idx] =
                Car { region: destination, busy_until: state.epoch + cfg.travel_time[origin][destination] };
            1
        }
    };
    next.cursor += 1;
    Ok((next, reward))
}

/// Move an epoch-end state to the start of the next epoch. Returns the new
/// state and the number of requests that arrived.
pub fn epoch_advance<R: Rng + ?Sized>(
    cfg: &RideHailConfig,
    state: &RideHailState,
    rng: &mut R,
) -> Result<(RideHailState, usize)> {
    if !state.epoch_end_pending() {
        return contract(format!("epoch_advance called mid-epoch at {state}"));
    }
    if state.epoch >= cfg.horizon {
        return contract(format!("epoch_advance called at the final epoch {}", state.epoch));
    }
    let mut next = state.clone();
    let t = state.epoch;
    next.requests.retain(|r| r.expiry > t);
    let born = draw_requests(cfg, t + 1, &mut next.requests, rng);
    next.requests.sort_unstable();
    next.start_epoch(t + 1);
    Ok((next, born))
}

/// Advance through epochs without free cars until a decision is due or the
/// episode ends (the result is then terminal).
pub fn advance_to_decision<R: Rng + ?Sized>(
    cfg: &RideHailConfig,
    state: &RideHailState,
    rng: &mut R,
) -> Result<(RideHailState, usize)> {
    let mut s = state.clone();
    let mut born = 0;
    while s.epoch_end_pending() && s.epoch < cfg.horizon {
        let (n, b) = epoch_advance(cfg, &s, rng)?;
        s = n;
        born += b;
    }
    Ok((s, born))
}

/// `count` independent draws of the next decision state after an
/// epoch-end state, each one advanced past any epochs with no free cars.
pub fn sample_arrival_scenarios<R: Rng + ?Sized>(
    cfg: &RideHailConfig,
    pending: &RideHailState,
    count: usize,
    rng: &mut R,
) -> Result<Vec<RideHailState>> {
    if count == 0 {
        return contract("sample_arrival_scenarios needs at least one sample");
    }
    if !pending.epoch_end_pending() || pending.epoch >= cfg.horizon {
        return contract(format!(
            "sample_arrival_scenarios needs an epoch-end state before the horizon, got {pending}"
        ));
    }
    (0..count).map(|_| advance_to_decision(cfg, pending, rng).map(|(s, _)| s)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RideStep {
    pub epoch: u32,
    pub step: usize,
    pub state: RideHailState,
    pub action: SdmAction,
    pub reward: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RideTrajectory {
    /// Decision records in `(epoch, step)` order.
    pub steps: Vec<RideStep>,
    pub requests_generated: usize,
}

impl RideTrajectory {
    pub fn total_reward(&self) -> u64 {
        self.steps.iter().map(|s| s.reward as u64).sum()
    }

    /// Matched requests over generated requests; zero when nothing arrived.
    pub fn matching_rate(&self) -> f64 {
        if self.requests_generated == 0 {
            0.0
        } else {
            self.total_reward() as f64 / self.requests_generated as f64
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub fn simulate_ride_episode<T, P, R>(policy: &P, cfg: &RideHailConfig, rng: &mut R) -> Result<RideTrajectory>
where
    T: Scalar,
    P: Policy<RideHailState, SdmAction, T> + ?Sized,
    R: Rng + ?Sized,
{
    let (start, mut generated) = initial_state(cfg, rng)?;
    let (mut state, born) = advance_to_decision(cfg, &start, rng)?;
    generated += born;
    let mut steps = Vec::new();
    while !state.is_terminal() {
        let (t, i) = (state.epoch, state.sdm_step());
        let action = sample_action(policy, &state, rng)
            .ok_or_else(|| Error::Infeasible(format!("(t={t}, i={i}): policy returned no actions")))?;
        let (next, reward) =
            sdm_step(cfg, &state, action).map_err(|e| Error::Infeasible(format!("(t={t}, i={i}): {e}")))?;
        steps.push(RideStep { epoch: t, step: i, state, action, reward });
        let (after, born) = advance_to_decision(cfg, &next, rng)?;
        generated += born;
        state = after;
    }
    Ok(RideTrajectory { steps, requests_generated: generated })
}

/// Uniform over feasible templates.
#[derive(Debug, Clone)]
pub struct UniformDispatch {
    pub cfg: RideHailConfig,
}

impl<T: Scalar> Policy<RideHailState, SdmAction, T> for UniformDispatch {
    fn distribution(&self, state: &RideHailState) -> Vec<(SdmAction, T)> {
        let mask = action_mask(&self.cfg, state);
        let n = mask.iter().filter(|m| **m).count();
        let p = T::one() / T::of_usize(n);
        mask.iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| (SdmAction::from_index(i, self.cfg.regions), p))
            .collect()
    }
}

/// Match the first feasible request in template order, else hold.
#[derive(Debug, Clone)]
pub struct GreedyDispatch {
    pub cfg: RideHailConfig,
}

impl<T: Scalar> Policy<RideHailState, SdmAction, T> for GreedyDispatch {
    fn distribution(&self, state: &RideHailState) -> Vec<(SdmAction, T)> {
        let mask = action_mask(&self.cfg, state);
        let i = mask.iter().position(|m| *m).unwrap_or(self.cfg.regions * self.cfg.regions);
        vec![(SdmAction::from_index(i, self.cfg.regions), T::one())]
    }
}

/// Which branch of the next-state analysis applies to a decision state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepCase {
    /// More decisions follow in this epoch: deterministic next state.
    MidEpoch,
    /// Last decision of the last epoch: the episode ends.
    FinalStep,
    /// Last decision of an earlier epoch: passenger arrivals intervene.
    EpochBoundary,
}

pub fn classify(state: &RideHailState) -> StepCase {
    if !state.is_last_step() {
        StepCase::MidEpoch
    } else if state.epoch >= state.horizon {
        StepCase::FinalStep
    } else {
        StepCase::EpochBoundary
    }
}

impl<T: Scalar> Dynamics<T> for RideHailConfig {
    type State = RideHailState;
    type Action = SdmAction;

    fn next_law(&self, state: &RideHailState, action: &SdmAction) -> Result<NextLaw<RideHailState, T>> {
        match classify(state) {
            StepCase::MidEpoch => Ok(NextLaw::Deterministic(Some(sdm_step(self, state, *action)?.0))),
            StepCase::FinalStep => Ok(NextLaw::Deterministic(None)),
            StepCase::EpochBoundary => Ok(NextLaw::Intractable(format!(
                "the passenger-arrival expectation after {state} cannot be enumerated"
            ))),
        }
    }

    fn sample_next<R: Rng + ?Sized>(
        &self,
        state: &RideHailState,
        action: &SdmAction,
        rng: &mut R,
    ) -> Result<Option<RideHailState>> {
        let (post, _) = sdm_step(self, state, *action)?;
        if !post.epoch_end_pending() {
            return Ok(Some(post));
        }
        if post.epoch >= self.horizon {
            return Ok(None);
        }
        let (next, _) = advance_to_decision(self, &post, rng)?;
        Ok(if next.is_terminal() { None } else { Some(next) })
    }
}
