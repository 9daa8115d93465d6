//! Advantages and the clipped-surrogate policy step.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{Adam, PolicyHead, ValueNet};
use crate::error::{Error, Result};
use crate::stats::standardize;

/// One decision as seen by the policy update.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub features: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    /// Probability of `action` under the behavior policy.
    pub old_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyUpdateConfig {
    pub epochs: usize,
    pub minibatch: usize,
    pub clip_epsilon: f64,
    pub entropy_coef: f64,
}

impl Default for PolicyUpdateConfig {
    fn default() -> Self {
        PolicyUpdateConfig { epochs: 4, minibatch: 512, clip_epsilon: 0.2, entropy_coef: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    /// Mean clipped surrogate over the last epoch.
    pub surrogate: f64,
    /// Fraction of sample evaluations on the clipped branch.
    pub clip_fraction: f64,
}

/// `target - V(s)` on the raw scale, before standardization.
pub fn raw_advantages(targets: &[f64], inputs: &[Vec<f64>], net: &ValueNet<f64>) -> Result<Vec<f64>> {
    if targets.len() != inputs.len() {
        return Err(Error::Dimension { expected: targets.len(), got: inputs.len() });
    }
    targets.iter().zip(inputs).map(|(t, x)| net.predict(x).map(|v| *t - v)).collect()
}

/// Batch-standardized advantages; `negate` flips the sign for cost
/// minimization.
pub fn compute_advantages(targets: &[f64], inputs: &[Vec<f64>], net: &ValueNet<f64>, negate: bool) -> Result<Vec<f64>> {
    let mut raw = raw_advantages(targets, inputs, net)?;
    if let Some(k) = raw.iter().position(|a| !a.is_finite()) {
        return Err(Error::Divergence(format!("non-finite advantage at sample {k} (target {})", targets[k])));
    }
    if negate {
        raw.iter_mut().for_each(|a| *a = -*a);
    }
    Ok(standardize(&raw))
}

/// Clipped surrogate `min(r A, clip(r, 1 - eps, 1 + eps) A)` of one sample
/// and its gradient with respect to the logits.
///
/// `probs` are the current action probabilities. On the clipped branch the
/// objective does not depend on the logits and the gradient is zero.
pub fn surrogate_gradient(
    probs: &[f64],
    action: usize,
    old_prob: f64,
    advantage: f64,
    clip_epsilon: f64,
) -> Result<(f64, Vec<f64>, bool)> {
    let ratio = probs[action] / old_prob;
    if !ratio.is_finite() {
        return Err(Error::Divergence(format!("probability ratio {} / {old_prob} is not finite", probs[action])));
    }
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
    let (plain, capped) = (ratio * advantage, clipped * advantage);
    if capped < plain {
        return Ok((capped, vec![0.0; probs.len()], true));
    }
    let grad =
        probs.iter().enumerate().map(|(j, p)| advantage * ratio * (if j == action { 1.0 } else { 0.0 } - p)).collect();
    Ok((plain, grad, false))
}

fn entropy_gradient(probs: &[f64]) -> Vec<f64> {
    let h: f64 = probs.iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum();
    probs.iter().map(|&p| if p > 0.0 { -p * (p.ln() + h) } else { 0.0 }).collect()
}

/// Several epochs of minibatch ascent on the clipped surrogate plus the
/// weighted entropy bonus.
pub fn ppo_update<R: Rng + ?Sized>(
    head: &mut PolicyHead<f64>,
    samples: &[PolicySample],
    advantages: &[f64],
    cfg: &PolicyUpdateConfig,
    opt: &mut Adam<f64>,
    rng: &mut R,
) -> Result<UpdateReport> {
    if samples.len() != advantages.len() {
        return Err(Error::Dimension { expected: samples.len(), got: advantages.len() });
    }
    if samples.is_empty() {
        return Ok(UpdateReport { surrogate: 0.0, clip_fraction: 0.0 });
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch = cfg.minibatch.max(1);
    let mut report = UpdateReport { surrogate: 0.0, clip_fraction: 0.0 };
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let (mut total, mut n_clipped) = (0.0, 0usize);
        for chunk in order.chunks(batch) {
            let scale = 1.0 / chunk.len() as f64;
            let mut grads = vec![0.0; head.net.num_params()];
            for &i in chunk {
                let s = &samples[i];
                let trace = head.net.forward_trace(&s.features)?;
                let probs = crate::approximator::masked_softmax(trace.output(), &s.mask)?;
                let (obj, mut g, was_clipped) =
                    surrogate_gradient(&probs, s.action, s.old_prob, advantages[i], cfg.clip_epsilon)?;
                total += obj;
                n_clipped += was_clipped as usize;
                if cfg.entropy_coef != 0.0 {
                    for (gj, ej) in g.iter_mut().zip(entropy_gradient(&probs)) {
                        *gj += cfg.entropy_coef * ej;
                    }
                }
                // Adam minimizes, so descend on the negated objective.
                let grad_out: Vec<f64> = g.iter().map(|v| -v * scale).collect();
                head.net.backward(&trace, &grad_out, &mut grads)?;
            }
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence("non-finite policy gradient".into()));
            }
            opt.step(head.net.params_mut(), &grads);
        }
        report = UpdateReport {
            surrogate: total / samples.len() as f64,
            clip_fraction: n_clipped as f64 / samples.len() as f64,
        };
    }
    Ok(report)
}
