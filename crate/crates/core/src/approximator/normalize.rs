use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Smallest standard deviation used when scaling a feature.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationScheme {
    None,
    #[default]
    InputOnly,
    InputAndOutput,
}

impl NormalizationScheme {
    pub fn label(&self) -> &'static str {
        match self {
            NormalizationScheme::None => "none",
            NormalizationScheme::InputOnly => "input_only",
            NormalizationScheme::InputAndOutput => "input_and_output",
        }
    }

    pub fn normalizes_input(&self) -> bool {
        !matches!(self, NormalizationScheme::None)
    }

    pub fn normalizes_output(&self) -> bool {
        matches!(self, NormalizationScheme::InputAndOutput)
    }
}

/// Per-dimension affine scaling `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    /// Population statistics of `rows`; standard deviations are floored at
    /// [`STD_FLOOR`].
    pub fn fit<V: AsRef<[T]>>(rows: &[V]) -> Option<Self> {
        let first = rows.first()?;
        let d = first.as_ref().len();
        let n = T::of_usize(rows.len());
        let mut mean = vec![T::zero(); d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r.as_ref()) {
                *m += *x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *v += (*x - *m) * (*x - *m);
            }
        }
        let floor = T::of(STD_FLOOR);
        let std = var.into_iter().map(|v| (v / n).sqrt().max(floor)).collect();
        Some(Standardizer { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer { mean: vec![T::zero(); dim], std: vec![T::one(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (*x - *m) / *s).collect()
    }

    pub fn invert(&self, z: &[T]) -> Vec<T> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((z, m), s)| *z * *s + *m).collect()
    }
}
