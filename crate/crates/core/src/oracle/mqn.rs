//! Truncated Criss-Cross network: Poisson equation and relative value
//! iteration.

use std::collections::VecDeque;
use std::io::Write;

use super::banded::Banded;
use crate::env_mqn::{MqnAction, MqnConfig, MqnState};
use crate::error::{Error, Result};
use crate::estimators::ValueApproximation;
use crate::policy::Policy;
use crate::scalar::Scalar;
use crate::stats::fmt17;

pub const RVI_TOLERANCE: f64 = 1e-9;
pub const RVI_MAX_ITERATIONS: usize = 500_000;

/// The network restricted to `q1, q2, q3 <= cap`.
///
/// Transitions are assembled from the event rates directly: an arrival into
/// a full buffer, or a class-1 completion into a full class-3 buffer, is a
/// self-loop. Simulating `cfg.with_cap(cap)` follows the same chain.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMqn {
    pub cap: u32,
    pub cfg: MqnConfig,
}

impl TruncatedMqn {
    pub fn new(cfg: &MqnConfig, cap: u32) -> Result<Self> {
        cfg.validate()?;
        if cap > 30 {
            return Err(Error::Oracle(format!("cap {cap} is too large for a dense solve")));
        }
        Ok(TruncatedMqn { cap, cfg: MqnConfig { buffer_cap: Some(cap), ..cfg.clone() } })
    }

    /// Environment configuration whose dynamics match this truncation.
    pub fn env_config(&self) -> MqnConfig {
        self.cfg.clone()
    }

    fn side(&self) -> usize {
        self.cap as usize + 1
    }

    pub fn num_states(&self) -> usize {
        self.side().pow(3)
    }

    pub fn index(&self, s: &MqnState) -> Option<usize> {
        let c = self.cap;
        if s.q1 > c || s.q2 > c || s.q3 > c {
            return None;
        }
        let m = self.side();
        Some((s.q1 as usize * m + s.q2 as usize) * m + s.q3 as usize)
    }

    pub fn state(&self, index: usize) -> MqnState {
        let m = self.side();
        MqnState::new((index / (m * m)) as u32, (index / m % m) as u32, (index % m) as u32)
    }

    pub fn states(&self) -> impl Iterator<Item = MqnState> + '_ {
        (0..self.num_states()).map(|i| self.state(i))
    }

    /// Nearest state inside the truncation.
    pub fn clamp(&self, s: &MqnState) -> MqnState {
        MqnState::new(s.q1.min(self.cap), s.q2.min(self.cap), s.q3.min(self.cap))
    }

    pub fn actions(&self, s: &MqnState) -> Vec<MqnAction> {
        let mut out = Vec::with_capacity(3);
        if s.q1 > 0 {
            out.push(MqnAction::ServeClass1);
        }
        if s.q2 > 0 {
            out.push(MqnAction::ServeClass2);
        }
        out.push(MqnAction::Idle);
        out
    }

    /// Row of the transition matrix for `(s, a)` as `(index, probability)`,
    /// self-loop included.
    pub fn transitions(&self, s: &MqnState, a: MqnAction) -> Result<Vec<(usize, f64)>> {
        let here = self
            .index(s)
            .ok_or_else(|| Error::Oracle(format!("state {s} lies outside the truncation at cap {}", self.cap)))?;
        if !self.actions(s).contains(&a) {
            return Err(Error::Infeasible(format!("{a:?} at {s}")));
        }
        let c = self.cap;
        let cfg = &self.cfg;
        let mut events: Vec<(MqnState, f64)> = Vec::with_capacity(4);
        if s.q1 < c {
            events.push((MqnState { q1: s.q1 + 1, ..*s }, cfg.lambda1));
        }
        if s.q2 < c {
            events.push((MqnState { q2: s.q2 + 1, ..*s }, cfg.lambda2));
        }
        if a == MqnAction::ServeClass1 && s.q3 < c {
            events.push((MqnState { q1: s.q1 - 1, q3: s.q3 + 1, ..*s }, cfg.mu1));
        }
        if a == MqnAction::ServeClass2 {
            events.push((MqnState { q2: s.q2 - 1, ..*s }, cfg.mu2));
        }
        if s.q3 > 0 {
            events.push((MqnState { q3: s.q3 - 1, ..*s }, cfg.mu3));
        }
        let total = cfg.uniformization_constant();
        let active: f64 = events.iter().map(|(_, r)| r).sum();
        let mut row: Vec<(usize, f64)> =
            events.into_iter().map(|(y, r)| (self.index(&y).expect("moves stay inside the box"), r / total)).collect();
        let idle = (total - active) / total;
        if idle > 0.0 {
            row.push((here, idle));
        }
        Ok(row)
    }

    /// Transition row of the chain induced by `policy`.
    fn policy_row<P: Policy<MqnState, MqnAction, f64> + ?Sized>(
        &self,
        policy: &P,
        s: &MqnState,
    ) -> Result<Vec<(usize, f64)>> {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (a, pa) in policy.distribution(s) {
            if pa <= 0.0 {
                continue;
            }
            for (y, p) in self.transitions(s, a)? {
                match row.iter_mut().find(|(j, _)| *j == y) {
                    Some(e) => e.1 += pa * p,
                    None => row.push((y, pa * p)),
                }
            }
        }
        if row.is_empty() {
            return Err(Error::Oracle(format!("policy has no action with positive probability at {s}")));
        }
        Ok(row)
    }

    fn policy_rows<P: Policy<MqnState, MqnAction, f64> + ?Sized>(&self, policy: &P) -> Result<Vec<Vec<(usize, f64)>>> {
        self.states().map(|s| self.policy_row(policy, &s)).collect()
    }

    fn check_irreducible(&self, rows: &[Vec<(usize, f64)>]) -> Result<()> {
        let n = rows.len();
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (x, row) in rows.iter().enumerate() {
            for &(y, p) in row {
                if p > 0.0 {
                    reverse[y].push(x);
                }
            }
        }
        let forward = reach(n, |x| rows[x].iter().filter(|(_, p)| *p > 0.0).map(|(y, _)| *y).collect());
        let backward = reach(n, |x| reverse[x].clone());
        let bad: Vec<String> = (0..n)
            .filter(|&x| !forward[x] || !backward[x])
            .map(|x| {
                let why = if !forward[x] { "unreachable from empty" } else { "cannot return to empty" };
                format!("{} ({why})", self.state(x))
            })
            .collect();
        if bad.is_empty() {
            return Ok(());
        }
        let shown: Vec<&str> = bad.iter().take(20).map(String::as_str).collect();
        Err(Error::Oracle(format!("induced chain is reducible: {} states fail, e.g. {}", bad.len(), shown.join(", "))))
    }
}

fn reach(n: usize, next: impl Fn(usize) -> Vec<usize>) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(x) = queue.pop_front() {
        for y in next(x) {
            if !seen[y] {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    seen
}

/// Relative values `h` (with `h(empty) = 0`) and the long-run average cost.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    pub cap: u32,
    pub h: Vec<f64>,
    pub average_cost: f64,
}

impl PoissonSolution {
    fn side(&self) -> usize {
        self.cap as usize + 1
    }

    /// `h` at `s`, clamped into the truncation.
    pub fn h_at(&self, s: &MqnState) -> f64 {
        let c = self.cap;
        let m = self.side();
        let i = (s.q1.min(c) as usize * m + s.q2.min(c) as usize) * m + s.q3.min(c) as usize;
        self.h[i]
    }
}

impl<T: Scalar> ValueApproximation<MqnState, T> for PoissonSolution {
    fn evaluate(&self, state: &MqnState) -> T {
        T::of(self.h_at(state))
    }

    fn descriptor(&self) -> String {
        format!("oracle h (cap {})", self.cap)
    }
}

/// Solve `h(x) = g(x) - c + sum_y P(y|x) h(y)` with `h(empty) = 0` for the
/// chain induced by `policy`.
///
/// The empty state is eliminated: with `A = I - P` restricted to the other
/// states, `h = u - c w` where `A u = g` and `A w = 1`, and the equation at
/// the empty state fixes `c`. States are ordered so that `A` is banded.
pub fn exact_poisson_solution<P>(net: &TruncatedMqn, policy: &P) -> Result<PoissonSolution>
where
    P: Policy<MqnState, MqnAction, f64> + ?Sized,
{
    let rows = net.policy_rows(policy)?;
    net.check_irreducible(&rows)?;
    let n = rows.len();
    let g: Vec<f64> = net.states().map(|s| s.cost() as f64).collect();
    if n == 1 {
        return Ok(PoissonSolution { cap: net.cap, h: vec![0.0], average_cost: g[0] });
    }
    let bw = net.side() * net.side();
    let mut a = Banded::zeros(n - 1, bw);
    for (x, row) in rows.iter().enumerate().skip(1) {
        a.add(x - 1, x - 1, 1.0);
        for &(y, p) in row {
            if y != 0 {
                a.add(x - 1, y - 1, -p);
            }
        }
    }
    let lu = a.factor()?;
    let u = lu.solve(&g[1..]);
    let w = lu.solve(&vec![1.0; n - 1]);
    let (mut pu, mut pw) = (0.0, 0.0);
    for &(y, p) in &rows[0] {
        if y != 0 {
            pu += p * u[y - 1];
            pw += p * w[y - 1];
        }
    }
    let c = (g[0] + pu) / (1.0 + pw);
    let mut h = Vec::with_capacity(n);
    h.push(0.0);
    h.extend(u.iter().zip(&w).map(|(u, w)| u - c * w));
    if !c.is_finite() || h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Oracle("Poisson solve produced non-finite values".into()));
    }
    Ok(PoissonSolution { cap: net.cap, h, average_cost: c })
}

/// Largest absolute residual of the Poisson identity at any state.
pub fn poisson_residual<P>(net: &TruncatedMqn, policy: &P, sol: &PoissonSolution) -> Result<f64>
where
    P: Policy<MqnState, MqnAction, f64> + ?Sized,
{
    let rows = net.policy_rows(policy)?;
    let mut worst: f64 = 0.0;
    for (x, row) in rows.iter().enumerate() {
        let ph: f64 = row.iter().map(|&(y, p)| p * sol.h[y]).sum();
        let g = net.state(x).cost() as f64;
        worst = worst.max((sol.h[x] - (g - sol.average_cost + ph)).abs());
    }
    Ok(worst)
}

/// Deterministic stationary policy stored per truncated state. States
/// outside the truncation use the action of their clamped state.
#[derive(Debug, Clone, PartialEq)]
pub struct TablePolicy {
    pub cap: u32,
    pub actions: Vec<MqnAction>,
}

impl TablePolicy {
    pub fn choose(&self, s: &MqnState) -> MqnAction {
        let c = self.cap;
        let m = c as usize + 1;
        let i = (s.q1.min(c) as usize * m + s.q2.min(c) as usize) * m + s.q3.min(c) as usize;
        self.actions[i]
    }
}

impl<T: Scalar> Policy<MqnState, MqnAction, T> for TablePolicy {
    fn distribution(&self, state: &MqnState) -> Vec<(MqnAction, T)> {
        vec![(self.choose(state), T::one())]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub average_cost: f64,
    /// Relative values from the last iterate, zero at the empty state.
    pub h: Vec<f64>,
    pub policy: TablePolicy,
    pub iterations: usize,
    pub span: f64,
}

/// Relative value iteration for the minimal average cost.
///
/// Stops when the span of `T h - h` drops below [`RVI_TOLERANCE`]; the
/// average cost is the midpoint of that difference. Ties in the greedy
/// policy go to the earlier action in `ServeClass1, ServeClass2, Idle`.
pub fn optimal_average_cost(net: &TruncatedMqn) -> Result<OptimalSolution> {
    let n = net.num_states();
    let mut table: Vec<Vec<(MqnAction, Vec<(usize, f64)>)>> = Vec::with_capacity(n);
    for s in net.states() {
        table.push(net.actions(&s).into_iter().map(|a| net.transitions(&s, a).map(|r| (a, r))).collect::<Result<_>>()?);
    }
    let g: Vec<f64> = net.states().map(|s| s.cost() as f64).collect();
    let bellman = |h: &[f64], x: usize| -> (f64, MqnAction) {
        let mut best: Option<(f64, MqnAction)> = None;
        for (a, row) in &table[x] {
            let q = g[x] + row.iter().map(|&(y, p)| p * h[y]).sum::<f64>();
            if best.is_none_or(|(b, _)| q < b - 1e-12 * (1.0 + b.abs())) {
                best = Some((q, *a));
            }
        }
        best.expect("idling is always available")
    };
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut span = f64::INFINITY;
    for it in 1..=RVI_MAX_ITERATIONS {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in 0..n {
            next[x] = bellman(&h, x).0;
            let d = next[x] - h[x];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span = hi - lo;
        let anchor = next[0];
        for (hx, nx) in h.iter_mut().zip(&next) {
            *hx = nx - anchor;
        }
        if span < RVI_TOLERANCE {
            let actions = (0..n).map(|x| bellman(&h, x).1).collect();
            return Ok(OptimalSolution {
                average_cost: 0.5 * (lo + hi),
                h,
                policy: TablePolicy { cap: net.cap, actions },
                iterations: it,
                span,
            });
        }
    }
    Err(Error::Oracle(format!(
        "relative value iteration did not converge in {RVI_MAX_ITERATIONS} iterations (span {span:e})"
    )))
}

fn action_label(a: MqnAction) -> &'static str {
    match a {
        MqnAction::ServeClass1 => "serve_class1",
        MqnAction::ServeClass2 => "serve_class2",
        MqnAction::Idle => "idle",
    }
}

/// CSV `q1,q2,q3,h`.
pub fn write_h_csv<W: Write>(mut out: W, net: &TruncatedMqn, h: &[f64]) -> Result<()> {
    if h.len() != net.num_states() {
        return Err(Error::Dimension { expected: net.num_states(), got: h.len() });
    }
    writeln!(out, "q1,q2,q3,h")?;
    for (s, v) in net.states().zip(h) {
        writeln!(out, "{},{},{},{}", s.q1, s.q2, s.q3, fmt17(*v))?;
    }
    Ok(())
}

/// CSV `q1,q2,q3,action`.
pub fn write_policy_csv<W: Write>(mut out: W, net: &TruncatedMqn, policy: &TablePolicy) -> Result<()> {
    writeln!(out, "q1,q2,q3,action")?;
    for s in net.states() {
        writeln!(out, "{},{},{},{}", s.q1, s.q2, s.q3, action_label(policy.choose(&s)))?;
    }
    Ok(())
}
