use rand::Rng;

use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Softmax restricted to `mask`; masked entries get exactly zero.
pub fn masked_softmax<T: Scalar>(logits: &[T], mask: &[bool]) -> Result<Vec<T>> {
    if logits.len() != mask.len() {
        return Err(Error::Dimension { expected: logits.len(), got: mask.len() });
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(None, |acc: Option<T>, l| Some(acc.map_or(l, |a| a.max(l))))
        .ok_or_else(|| Error::Contract("no feasible action".into()))?;
    let exps: Vec<T> = logits.iter().zip(mask).map(|(l, m)| if *m { (*l - max).exp() } else { T::zero() }).collect();
    let total = exps.iter().fold(T::zero(), |a, e| a + *e);
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// One logit per action template, masked to the feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyHead<T> {
    pub net: Mlp<T>,
}

impl<T: Scalar> PolicyHead<T> {
    /// Random body, output layer shrunk so the initial policy is close to
    /// uniform over feasible actions.
    pub fn random<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Mlp::random(layer_sizes, rng)?;
        net.scale_output_layer(T::of(0.01));
        Ok(PolicyHead { net })
    }

    pub fn probabilities(&self, features: &[T], mask: &[bool]) -> Result<Vec<T>> {
        masked_softmax(&self.net.forward(features)?, mask)
    }
}
