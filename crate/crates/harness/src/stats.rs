//! Confidence intervals over seeds.

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

/// Two-sided 95% Student-t quantile with `df` degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1").inverse_cdf(0.975)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub rows: Vec<AggregateRow>,
    /// Set when seeds ran for different numbers of iterations.
    pub warning: Option<String>,
}

/// Mean and 95% interval `mean +- t_{0.975, n-1} sd / sqrt(n)`; a single
/// value gives a zero-width interval.
pub fn mean_ci(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, mean, mean);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = t_quantile_975(n - 1) * var.sqrt() / (n as f64).sqrt();
    (mean, mean - half, mean + half)
}

/// Per-iteration aggregation of one value across seeds. Curves of unequal
/// length are cut to the shortest.
pub fn aggregate_curves(per_seed: &[(u64, Vec<f64>)]) -> Aggregate {
    if per_seed.is_empty() {
        return Aggregate { rows: Vec::new(), warning: None };
    }
    let shortest = per_seed.iter().map(|(_, c)| c.len()).min().unwrap_or(0);
    let longest = per_seed.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    let warning = (shortest != longest).then(|| {
        let lens: Vec<String> = per_seed.iter().map(|(s, c)| format!("seed {s}: {}", c.len())).collect();
        format!("ragged curves truncated to {shortest} iterations ({})", lens.join(", "))
    });
    let rows = (0..shortest)
        .map(|k| {
            let xs: Vec<f64> = per_seed.iter().map(|(_, c)| c[k]).collect();
            let (mean, ci_low, ci_high) = mean_ci(&xs);
            AggregateRow { iteration: k + 1, mean, ci_low, ci_high }
        })
        .collect();
    Aggregate { rows, warning }
}

/// 95% chi-square interval for a variance estimated from `n` samples.
pub fn variance_ci(variance: f64, n: usize) -> (f64, f64) {
    if n < 2 {
        return (variance, variance);
    }
    let df = (n - 1) as f64;
    let chi = ChiSquared::new(df).expect("df >= 1");
    (df * variance / chi.inverse_cdf(0.975), df * variance / chi.inverse_cdf(0.025))
}
