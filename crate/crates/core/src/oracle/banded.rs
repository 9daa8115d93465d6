//! Banded LU without pivoting, for diagonally dominant systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Banded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Banded {
    pub(crate) fn zeros(n: usize, bw: usize) -> Self {
        Banded { n, bw, data: vec![0.0; n * (2 * bw + 1)] }
    }

    fn at(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.bw >= i && j <= i + self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.at(i, j);
        self.data[k] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.at(i, j)]
    }

    /// In-place factorization `A = LU`, unit lower triangle stored below the
    /// diagonal.
    pub(crate) fn factor(mut self) -> Result<Self> {
        for k in 0..self.n {
            let pivot = self.get(k, k);
            if pivot.abs() < 1e-300 {
                return Err(Error::Oracle(format!("singular system at row {k}")));
            }
            let end = (k + self.bw + 1).min(self.n);
            for i in k + 1..end {
                let ik = self.at(i, k);
                let l = self.data[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[ik] = l;
                for j in k + 1..end {
                    let kj = self.get(k, j);
                    if kj != 0.0 {
                        let ij = self.at(i, j);
                        self.data[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(self)
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let start = i.saturating_sub(self.bw);
            let mut s = y[i];
            for j in start..i {
                s -= self.get(i, j) * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let end = (i + self.bw + 1).min(n);
            let mut s = y[i];
            for j in i + 1..end {
                s -= self.get(i, j) * y[j];
            }
            y[i] = s / self.get(i, i);
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solve() {
        let n = 6;
        let mut a = Banded::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 4.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| 4.0 * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - if i + 1 < n { x[i + 1] } else { 0.0 })
            .collect();
        let got = a.factor().unwrap().solve(&b);
        for (g, w) in got.iter().zip(&x) {
            assert!((g - w).abs() < 1e-12);
        }
    }
}
