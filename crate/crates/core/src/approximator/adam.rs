use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 3e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Adam { config, m: vec![T::zero(); num_params], v: vec![T::zero(); num_params], t: 0 }
    }

    /// One descent step on `params` along `grads`.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let b1 = T::of(self.config.beta1);
        let b2 = T::of(self.config.beta2);
        let lr = T::of(self.config.learning_rate);
        let eps = T::of(self.config.epsilon);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * *g;
            *v = b2 * *v + (T::one() - b2) * *g * *g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = Adam::<f64>::new(AdamConfig { learning_rate: 0.1, ..Default::default() }, 2);
        let mut p = [1.0, -1.0];
        opt.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = Adam::<f64>::new(AdamConfig { learning_rate: 0.05, ..Default::default() }, 1);
        let mut p = [5.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.5)];
            opt.step(&mut p, &g);
        }
        assert!((p[0] - 1.5).abs() < 1e-3);
    }
}
