//! One-step transition laws as seen by the AMP estimators.

use std::hash::Hash;

use rand::Rng;

use crate::error::Result;
use crate::scalar::Scalar;

/// Law of the next *recorded* state after taking an action.
///
/// `None` stands for the end of the episode, where the value approximation
/// is taken to be zero.
#[derive(Debug, Clone, PartialEq)]
pub enum NextLaw<S, T> {
    Deterministic(Option<S>),
    /// Finite support with probabilities summing to one.
    Enumerable(Vec<(Option<S>, T)>),
    /// The support cannot be enumerated; only sampling is available.
    Intractable(String),
}

pub trait Dynamics<T: Scalar> {
    type State: Clone + Eq + Hash;
    type Action: Clone;

    fn next_law(&self, state: &Self::State, action: &Self::Action) -> Result<NextLaw<Self::State, T>>;

    /// One draw from the next-state law.
    fn sample_next<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: &Self::Action,
        rng: &mut R,
    ) -> Result<Option<Self::State>>;
}

impl<T: Scalar, D: Dynamics<T>> Dynamics<T> for &D {
    type State = D::State;
    type Action = D::Action;

    fn next_law(&self, state: &Self::State, action: &Self::Action) -> Result<NextLaw<Self::State, T>> {
        (**self).next_law(state, action)
    }

    fn sample_next<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: &Self::Action,
        rng: &mut R,
    ) -> Result<Option<Self::State>> {
        (**self).sample_next(state, action, rng)
    }
}
