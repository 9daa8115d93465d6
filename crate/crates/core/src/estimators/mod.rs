//! Value-target estimators.
//!
//! * plain Monte Carlo: reward-to-go (episodic) or centered regenerative
//!   cycle sums (average cost);
//! * AMP: the same sums with each summand shifted by the martingale
//!   increment `E[zeta(next)] - zeta(current)`, plus `zeta` at the start.
//!
//! The expectation `E[zeta(next)]` is either enumerated exactly or replaced
//! by a sample mean over `L` draws per action, see [`plan`].

mod episodic;
mod export;
pub mod plan;
mod regenerative;
mod variance;

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use episodic::{
    amp_targets, episodic_amp_backward, expected_zeta_ridehail, martingale_corrections, martingale_process,
    plain_mc_targets, reward_to_go,
};
pub use export::write_targets_csv;
pub use plan::{
    evaluate_plan, evaluate_plans, prepare_plan, prepare_plans, sampling_variance, ActionBranch, ExpectationPlan,
    Outcomes,
};
pub use regenerative::{
    centered_regenerative_targets, estimate_average_cost, mqn_amp_from_expectations, mqn_amp_targets,
};
pub use variance::{
    mqn_estimator_variance, mqn_sampling_deviation, ride_estimator_variance, AnchorReport, DeviationReport,
    PositionLabel, VarianceStudy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorMode {
    PlainMc,
    AmpExact,
    /// Sample-mean expectation over `samples` next-state draws per action.
    AmpSampled {
        samples: usize,
    },
}

impl EstimatorMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorMode::AmpSampled { samples: 0 } => Err(Error::Config("amp_sampled needs samples >= 1".into())),
            _ => Ok(()),
        }
    }

    pub fn is_amp(&self) -> bool {
        !matches!(self, EstimatorMode::PlainMc)
    }

    pub fn label(&self) -> String {
        match self {
            EstimatorMode::PlainMc => "plain_mc".into(),
            EstimatorMode::AmpExact => "amp_exact".into(),
            EstimatorMode::AmpSampled { samples } => format!("amp_sampled_L{samples}"),
        }
    }

    /// Sample size, zero for the non-sampling modes.
    pub fn samples(&self) -> usize {
        match self {
            EstimatorMode::AmpSampled { samples } => *samples,
            _ => 0,
        }
    }
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// The approximation `zeta` plugged into the martingale correction.
pub trait ValueApproximation<S, T: Scalar> {
    fn evaluate(&self, state: &S) -> T;

    fn descriptor(&self) -> String {
        String::from("unnamed")
    }
}

impl<S, T: Scalar, Z: ValueApproximation<S, T> + ?Sized> ValueApproximation<S, T> for &Z {
    fn evaluate(&self, state: &S) -> T {
        (**self).evaluate(state)
    }

    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroValue;

impl<S, T: Scalar> ValueApproximation<S, T> for ZeroValue {
    fn evaluate(&self, _: &S) -> T {
        T::zero()
    }

    fn descriptor(&self) -> String {
        "zero".into()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantValue<T>(pub T);

impl<S, T: Scalar> ValueApproximation<S, T> for ConstantValue<T> {
    fn evaluate(&self, _: &S) -> T {
        self.0
    }

    fn descriptor(&self) -> String {
        format!("constant {}", self.0)
    }
}

/// Lookup table; states outside the table evaluate to `default`.
#[derive(Debug, Clone)]
pub struct TableValue<S, T> {
    pub table: HashMap<S, T>,
    pub default: T,
    pub name: String,
}

impl<S: Eq + Hash, T: Scalar> ValueApproximation<S, T> for TableValue<S, T> {
    fn evaluate(&self, state: &S) -> T {
        self.table.get(state).copied().unwrap_or(self.default)
    }

    fn descriptor(&self) -> String {
        self.name.clone()
    }
}

pub struct FnValue<F> {
    pub f: F,
    pub name: String,
}

impl<S, T: Scalar, F: Fn(&S) -> T> ValueApproximation<S, T> for FnValue<F> {
    fn evaluate(&self, state: &S) -> T {
        (self.f)(state)
    }

    fn descriptor(&self) -> String {
        self.name.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetIndex {
    /// Epoch and 1-based decision step of an episodic trajectory.
    Epoch { t: u32, i: usize },
    /// Position in an average-cost trajectory.
    Step(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetRecord<T> {
    pub index: TargetIndex,
    pub target: T,
}

/// One target per trajectory position, in trajectory order.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet<T> {
    pub mode: EstimatorMode,
    pub records: Vec<TargetRecord<T>>,
}

impl<T: Scalar> TargetSet<T> {
    pub fn values(&self) -> Vec<T> {
        self.records.iter().map(|r| r.target).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        match self.records.iter().find(|r| !r.target.is_finite()) {
            Some(r) => Err(Error::Divergence(format!("non-finite target at {:?}", r.index))),
            None => Ok(()),
        }
    }
}
