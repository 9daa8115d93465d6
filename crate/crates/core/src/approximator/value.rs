use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::mlp::Mlp;
use super::normalize::{NormalizationScheme, Standardizer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Value network with the standardization it was trained under.
///
/// [`ValueNet::predict`] always returns raw-scale values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet<T> {
    pub net: Mlp<T>,
    pub input: Option<Standardizer<T>>,
    pub output: Option<Standardizer<T>>,
}

impl<T: Scalar> ValueNet<T> {
    pub fn new(net: Mlp<T>) -> Self {
        ValueNet { net, input: None, output: None }
    }

    pub fn predict(&self, features: &[T]) -> Result<T> {
        let y = match &self.input {
            Some(s) => {
                if features.len() != s.dim() {
                    return Err(Error::Dimension { expected: s.dim(), got: features.len() });
                }
                self.net.forward(&s.apply(features))?
            }
            None => self.net.forward(features)?,
        };
        Ok(match &self.output {
            Some(s) => s.invert(&y)[0],
            None => y[0],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub epochs: usize,
    pub minibatch: usize,
    pub adam: AdamConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { epochs: 10, minibatch: 256, adam: AdamConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<T> {
    /// Mean minibatch loss of the last epoch, on the training scale.
    pub loss: T,
    pub epoch_losses: Vec<T>,
    /// Mean squared error of raw-scale predictions after training.
    pub raw_mse: T,
}

/// Fit `net` to `(inputs, targets)` by minibatch Adam on the squared error.
///
/// Statistics for `scheme` are recomputed from this dataset. The optimizer
/// state starts fresh; the weights start from `net`.
pub fn fit_value<T: Scalar, R: Rng + ?Sized>(
    net: &ValueNet<T>,
    inputs: &[Vec<T>],
    targets: &[T],
    scheme: NormalizationScheme,
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<(ValueNet<T>, FitReport<T>)> {
    if inputs.is_empty() {
        return Err(Error::Contract("fit_value needs a nonempty dataset".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::Dimension { expected: inputs.len(), got: targets.len() });
    }
    let input = if scheme.normalizes_input() { Standardizer::fit(inputs) } else { None };
    let outputs: Vec<Vec<T>> = targets.iter().map(|t| vec![*t]).collect();
    let output = if scheme.normalizes_output() { Standardizer::fit(&outputs) } else { None };

    let xs: Vec<Vec<T>> = match &input {
        Some(s) => inputs.iter().map(|x| s.apply(x)).collect(),
        None => inputs.to_vec(),
    };
    let ys: Vec<Vec<T>> = match &output {
        Some(s) => outputs.iter().map(|y| s.apply(y)).collect(),
        None => outputs,
    };

    let mut mlp = net.net.clone();
    let mut opt = Adam::new(cfg.adam, mlp.num_params());
    let batch = cfg.minibatch.max(1);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut weighted = T::zero();
        for (b, chunk) in order.chunks(batch).enumerate() {
            let bx: Vec<&[T]> = chunk.iter().map(|&i| xs[i].as_slice()).collect();
            let by: Vec<&[T]> = chunk.iter().map(|&i| ys[i].as_slice()).collect();
            let (loss, grads) = mlp.mse_loss_and_gradient(&bx, &by)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence(format!(
                    "value fit: non-finite loss {loss} at epoch {epoch}, minibatch {b}"
                )));
            }
            weighted += loss * T::of_usize(chunk.len());
            opt.step(mlp.params_mut(), &grads);
        }
        epoch_losses.push(weighted / T::of_usize(xs.len()));
    }
    if mlp.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::Divergence("value fit: non-finite parameters after training".into()));
    }
    let fitted = ValueNet { net: mlp, input, output };
    let mut sq = T::zero();
    for (x, t) in inputs.iter().zip(targets) {
        let e = fitted.predict(x)? - *t;
        sq += e * e;
    }
    let raw_mse = sq / T::of_usize(inputs.len());
    let loss = epoch_losses.last().copied().unwrap_or(raw_mse);
    Ok((fitted, FitReport { loss, epoch_losses, raw_mse }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn dataset(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = stream_rng(10, &[]);
        let xs: Vec<Vec<f64>> =
            (0..n).map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(-5.0..5.0)]).collect();
        let ys = xs.iter().map(|x| 3.0 * x[0] - x[1] + 20.0).collect();
        (xs, ys)
    }

    #[test]
    fn constant_targets_are_learned() {
        let (xs, _) = dataset(64);
        let ys = vec![4.5; xs.len()];
        let net = ValueNet::new(Mlp::random(&[2, 16, 1], &mut stream_rng(1, &[])).unwrap());
        let cfg =
            FitConfig { epochs: 1500, minibatch: 8, adam: AdamConfig { learning_rate: 1e-3, ..Default::default() } };
        let (fitted, _) =
            fit_value(&net, &xs, &ys, NormalizationScheme::InputOnly, &cfg, &mut stream_rng(2, &[])).unwrap();
        for x in &xs {
            let p = fitted.predict(x).unwrap();
            assert!((p - 4.5).abs() < 1e-2, "prediction {p}");
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (xs, ys) = dataset(40);
        let net = ValueNet::new(Mlp::random(&[2, 8, 1], &mut stream_rng(1, &[])).unwrap());
        let cfg = FitConfig { epochs: 3, minibatch: 8, adam: AdamConfig { learning_rate: 0.0, ..Default::default() } };
        let (fitted, _) =
            fit_value(&net, &xs, &ys, NormalizationScheme::InputAndOutput, &cfg, &mut stream_rng(2, &[])).unwrap();
        assert_eq!(fitted.net.params(), net.net.params());
    }

    #[test]
    fn prestandardized_none_matches_input_only() {
        let (xs, ys) = dataset(100);
        let s = Standardizer::fit(&xs).unwrap();
        let pre: Vec<Vec<f64>> = xs.iter().map(|x| s.apply(x)).collect();
        let net = ValueNet::new(Mlp::random(&[2, 8, 1], &mut stream_rng(4, &[])).unwrap());
        let cfg = FitConfig { epochs: 1, minibatch: 16, ..Default::default() };
        let (_, a) = fit_value(&net, &pre, &ys, NormalizationScheme::None, &cfg, &mut stream_rng(5, &[])).unwrap();
        let (_, b) = fit_value(&net, &xs, &ys, NormalizationScheme::InputOnly, &cfg, &mut stream_rng(5, &[])).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-6, "{} vs {}", a.loss, b.loss);
    }

    #[test]
    fn both_schemes_predict_on_the_raw_scale() {
        let (xs, ys) = dataset(200);
        let net = ValueNet::new(Mlp::random(&[2, 16, 1], &mut stream_rng(6, &[])).unwrap());
        let cfg =
            FitConfig { epochs: 200, minibatch: 32, adam: AdamConfig { learning_rate: 3e-3, ..Default::default() } };
        let mut fits = Vec::new();
        for scheme in [NormalizationScheme::InputOnly, NormalizationScheme::InputAndOutput] {
            let (f, rep) = fit_value(&net, &xs, &ys, scheme, &cfg, &mut stream_rng(7, &[])).unwrap();
            assert!(rep.raw_mse.is_finite());
            fits.push(f);
        }
        let probe = [5.0, 0.0];
        let want = 35.0;
        for f in &fits {
            let p = f.predict(&probe).unwrap();
            assert!((p - want).abs() < 0.25 * want, "prediction {p}");
        }
    }

    #[test]
    fn divergence_is_reported() {
        let xs = vec![vec![1.0], vec![2.0]];
        let ys = vec![f64::NAN, 1.0];
        let net = ValueNet::new(Mlp::random(&[1, 4, 1], &mut stream_rng(1, &[])).unwrap());
        let err = fit_value(&net, &xs, &ys, NormalizationScheme::None, &FitConfig::default(), &mut stream_rng(1, &[]))
            .unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
        assert!(fit_value(&net, &[], &[], NormalizationScheme::None, &FitConfig::default(), &mut stream_rng(1, &[]))
            .is_err());
    }
}
