//! Small sample-statistics helpers shared across modules.

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the `n - 1` denominator; zero for fewer than two points.
pub(crate) fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Sample autocorrelations for lags `1..=max_lag` using the usual biased
/// estimator `sum (x_t - m)(x_{t-k} - m) / sum (x_t - m)^2`.
/// Returns `None` for a constant series.
pub(crate) fn autocorrelations(x: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = c.iter().map(|v| v * v).sum();
    if denom <= 0.0 || !denom.is_finite() {
        return None;
    }
    Some(
        (1..=max_lag)
            .map(|k| c[k..].iter().zip(&c[..c.len() - k]).map(|(a, b)| a * b).sum::<f64>() / denom)
            .collect(),
    )
}

/// Empirical-CDF inverse: smallest observation `x` with `F_n(x) >= p`.
/// `sorted` must be ascending and non-empty.
pub(crate) fn ecdf_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = (p * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(n) - 1]
}
