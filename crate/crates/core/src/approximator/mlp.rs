use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully connected network, tanh on hidden layers, identity on the output.
///
/// Parameters are stored flat: for each layer, the `out x in` weight matrix
/// in row-major order followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layer_sizes: Vec<usize>,
    params: Vec<T>,
}

/// Per-layer activations of one forward pass, input first.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub activations: Vec<Vec<T>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {layer_sizes:?}")));
        }
        Ok(Mlp { layer_sizes: layer_sizes.to_vec(), params: vec![T::zero(); param_count(layer_sizes)] })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        let mut off = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = T::of(rng.random_range(-limit..limit));
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<T>) -> Result<Self> {
        let net = Self::zeros(layer_sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::Dimension { expected: net.params.len(), got: params.len() });
        }
        Ok(Mlp { params, ..net })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Multiply the last layer's weights and biases by `factor`.
    pub fn scale_output_layer(&mut self, factor: T) {
        let n = self.layer_sizes.len();
        let (i, o) = (self.layer_sizes[n - 2], self.layer_sizes[n - 1]);
        let start = self.params.len() - (i * o + o);
        for p in &mut self.params[start..] {
            *p *= factor;
        }
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let last = self.layer_sizes.len() - 2;
        let mut cur = x.to_vec();
        let mut off = 0;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            cur = self.affine(off, w[0], w[1], &cur);
            if l < last {
                cur.iter_mut().for_each(|v| *v = v.tanh());
            }
            off += w[0] * w[1] + w[1];
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[T]) -> Result<Trace<T>> {
        self.check_input(x)?;
        let last = self.layer_sizes.len() - 2;
        let mut activations = Vec::with_capacity(self.layer_sizes.len());
        activations.push(x.to_vec());
        let mut off = 0;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let mut z = self.affine(off, w[0], w[1], activations.last().expect("input pushed"));
            if l < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(z);
            off += w[0] * w[1] + w[1];
        }
        Ok(Trace { activations })
    }

    fn affine(&self, off: usize, n_in: usize, n_out: usize, x: &[T]) -> Vec<T> {
        let weights = &self.params[off..off + n_in * n_out];
        let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        weights
            .chunks_exact(n_in)
            .zip(bias)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + *w * *xi))
            .collect()
    }

    /// Accumulate `d(output . grad_out) / d(params)` into `grads`.
    pub fn backward(&self, trace: &Trace<T>, grad_out: &[T], grads: &mut [T]) -> Result<()> {
        if grad_out.len() != self.output_dim() {
            return Err(Error::Dimension { expected: self.output_dim(), got: grad_out.len() });
        }
        if grads.len() != self.params.len() {
            return Err(Error::Dimension { expected: self.params.len(), got: grads.len() });
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        // delta: gradient w.r.t. the pre-activation of the current layer
        let mut delta = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let input = &trace.activations[l];
            let off = offsets[l];
            for (o, d) in delta.iter().enumerate() {
                let row = &mut grads[off + o * n_in..off + (o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += *d * *x;
                }
                grads[off + n_in * n_out + o] += *d;
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let mut prev = vec![T::zero(); n_in];
                for (o, d) in delta.iter().enumerate() {
                    for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *p += *d * *w;
                    }
                }
                // tanh'(z) = 1 - a^2 with a the hidden activation
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= T::one() - *a * *a;
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// Batch-mean squared error and its exact gradient.
    pub fn mse_loss_and_gradient(&self, inputs: &[&[T]], targets: &[&[T]]) -> Result<(T, Vec<T>)> {
        if inputs.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::Dimension { expected: inputs.len(), got: targets.len() });
        }
        let m = self.output_dim();
        let scale = T::one() / T::of_usize(inputs.len() * m);
        let mut grads = vec![T::zero(); self.params.len()];
        let mut loss = T::zero();
        for (x, y) in inputs.iter().zip(targets) {
            if y.len() != m {
                return Err(Error::Dimension { expected: m, got: y.len() });
            }
            let trace = self.forward_trace(x)?;
            let residual: Vec<T> = trace.output().iter().zip(y.iter()).map(|(p, t)| *p - *t).collect();
            loss += residual.iter().fold(T::zero(), |a, r| a + *r * *r) * scale;
            let g: Vec<T> = residual.iter().map(|r| T::of(2.0) * *r * scale).collect();
            self.backward(&trace, &g, &mut grads)?;
        }
        Ok((loss, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer() {
        let net = Mlp::from_params(&[2, 2], vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5]).unwrap();
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), vec![3.5, 6.5]);
    }

    #[test]
    fn dimension_errors() {
        let net = Mlp::<f64>::zeros(&[3, 1]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { expected: 3, got: 1 })));
        assert!(Mlp::<f64>::zeros(&[3]).is_err());
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let a = Mlp::<f64>::random(&[4, 16, 16, 2], &mut stream_rng(1, &[])).unwrap();
        let b = Mlp::<f64>::random(&[4, 16, 16, 2], &mut stream_rng(1, &[])).unwrap();
        let x = [0.3, -1.2, 2.0, 0.0];
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
        assert_eq!(a.forward(&x).unwrap(), a.forward_trace(&x).unwrap().output());
    }

    #[test]
    fn gradient_vanishes_at_targets() {
        let net = Mlp::<f64>::random(&[2, 5, 1], &mut stream_rng(2, &[])).unwrap();
        let xs = [[0.1, 0.2], [-0.5, 1.0]];
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| net.forward(x).unwrap()).collect();
        let inputs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let targets: Vec<&[f64]> = ys.iter().map(|y| y.as_slice()).collect();
        let (loss, g) = net.mse_loss_and_gradient(&inputs, &targets).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_is_linear_in_residuals() {
        let net = Mlp::<f64>::random(&[2, 6, 1], &mut stream_rng(3, &[])).unwrap();
        let xs = [[0.4, -0.3], [1.1, 0.7], [-0.9, 0.2]];
        let preds: Vec<f64> = xs.iter().map(|x| net.forward(x).unwrap()[0]).collect();
        let shifts = [0.5, -1.25, 2.0];
        let t1: Vec<Vec<f64>> = preds.iter().zip(shifts).map(|(p, s)| vec![p - s]).collect();
        let t2: Vec<Vec<f64>> = preds.iter().zip(shifts).map(|(p, s)| vec![p - 2.0 * s]).collect();
        let inputs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let r1: Vec<&[f64]> = t1.iter().map(|t| t.as_slice()).collect();
        let r2: Vec<&[f64]> = t2.iter().map(|t| t.as_slice()).collect();
        let (_, g1) = net.mse_loss_and_gradient(&inputs, &r1).unwrap();
        let (_, g2) = net.mse_loss_and_gradient(&inputs, &r2).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
