use rand::Rng;

use crate::rng::sample_index;
use crate::scalar::Scalar;

/// A stochastic policy: state to a distribution over actions.
///
/// Implementations return only actions with positive probability or, at
/// least, only feasible ones; zero-probability entries are allowed.
pub trait Policy<S, A, T: Scalar = f64> {
    fn distribution(&self, state: &S) -> Vec<(A, T)>;
}

impl<S, A, T: Scalar, P: Policy<S, A, T> + ?Sized> Policy<S, A, T> for &P {
    fn distribution(&self, state: &S) -> Vec<(A, T)> {
        (**self).distribution(state)
    }
}

/// Policy backed by a closure.
pub struct FnPolicy<F>(pub F);

impl<S, A, T: Scalar, F: Fn(&S) -> Vec<(A, T)>> Policy<S, A, T> for FnPolicy<F> {
    fn distribution(&self, state: &S) -> Vec<(A, T)> {
        (self.0)(state)
    }
}

/// Draw an action from `policy` at `state`.
pub fn sample_action<S, A: Clone, T: Scalar, P, R>(policy: &P, state: &S, rng: &mut R) -> Option<A>
where
    P: Policy<S, A, T> + ?Sized,
    R: Rng + ?Sized,
{
    let dist = policy.distribution(state);
    if dist.is_empty() {
        return None;
    }
    let weights: Vec<T> = dist.iter().map(|(_, p)| *p).collect();
    let i = sample_index(&weights, rng);
    Some(dist[i].0.clone())
}
