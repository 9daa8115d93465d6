//! Small descriptive-statistics helpers shared by the estimators and the
//! training loop.

use crate::scalar::Scalar;

pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().copied().fold(T::zero(), |a, x| a + x) / T::of_usize(xs.len()))
    }
}

/// Sample mean and unbiased (`n - 1`) variance; `None` below two samples.
pub fn mean_variance<T: Scalar>(xs: &[T]) -> Option<(T, T)> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss = xs.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m));
    Some((m, ss / T::of_usize(xs.len() - 1)))
}

/// Shift to zero mean and scale to unit (population) standard deviation.
/// A zero-variance batch maps to all zeros.
pub fn standardize<T: Scalar>(xs: &[T]) -> Vec<T> {
    let Some(m) = mean(xs) else { return Vec::new() };
    let var = xs.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m)) / T::of_usize(xs.len());
    let sd = var.sqrt();
    if sd <= T::of(1e-12) * (T::one() + m.abs()) {
        return vec![T::zero(); xs.len()];
    }
    xs.iter().map(|&x| (x - m) / sd).collect()
}

/// Float formatted with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unbiased_variance() {
        let (m, v) = mean_variance(&[1.0, 3.0]).unwrap();
        assert_eq!((m, v), (2.0, 2.0));
        assert!(mean_variance(&[1.0f64]).is_none());
    }

    #[test]
    fn standardize_hand_case() {
        let z = standardize(&[1.0, 2.0, 6.0]);
        // mean 3, population sd sqrt(14/3)
        let sd = (14.0f64 / 3.0).sqrt();
        let want = [-2.0 / sd, -1.0 / sd, 3.0 / sd];
        for (a, b) in z.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(standardize(&[4.0, 4.0, 4.0]), vec![0.0; 3]);
    }

    #[test]
    fn seventeen_digits_round_trip() {
        let x = 0.1f64 + 0.2;
        assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
    }
}
