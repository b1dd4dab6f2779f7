//! Residual diagnostics for fitted ACD models.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::duration::DurationSeries;
use crate::error::{AcdError, Result};
use crate::model::{filter_psi, AcdSpec, PsiPath};
use crate::stats;

/// 5% critical value of the chi-squared distribution with 20 degrees of freedom.
pub const LB20_CRITICAL_5PCT: f64 = 31.41;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBox {
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "p")]
    pub p_value: f64,
    pub lags: usize,
}

impl LjungBox {
    /// Upper-tail decision; at 20 lags this uses the 31.41 critical value.
    pub fn rejects(&self, level: f64) -> bool {
        if self.lags == 20 && (level - 0.05).abs() < 1e-12 {
            self.q > LB20_CRITICAL_5PCT
        } else {
            self.p_value < level
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestStat {
    pub stat: f64,
    #[serde(rename = "p")]
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub chi2: f64,
    #[serde(rename = "p")]
    pub p_value: f64,
    pub df: usize,
}

fn chi2_sf(x: f64, df: usize) -> f64 {
    ChiSquared::new(df as f64).expect("positive df").sf(x)
}

/// `Q = n(n+2) Σ_{k=1..h} ρ_k² / (n-k)` with a chi-squared(h) p-value.
pub fn ljung_box(x: &[f64], h: usize) -> Result<LjungBox> {
    let n = x.len();
    if h == 0 || n <= h {
        return Err(AcdError::Validation(format!("Ljung-Box needs more than {h} observations, got {n}")));
    }
    let rho = stats::autocorrelations(x, h).ok_or_else(|| AcdError::Undefined("zero-variance series".into()))?;
    let nf = n as f64;
    let q = nf * (nf + 2.0) * rho.iter().enumerate().map(|(k, r)| r * r / (nf - (k + 1) as f64)).sum::<f64>();
    Ok(LjungBox { q, p_value: chi2_sf(q, h), lags: h })
}

/// `√n (σ̂² - 1) / (2√2)` with a two-sided standard-normal p-value.
pub fn excess_dispersion_test(residuals: &[f64]) -> Result<TestStat> {
    let n = residuals.len();
    if n < 2 {
        return Err(AcdError::Validation("dispersion test needs at least two residuals".into()));
    }
    let var = stats::sample_variance(residuals);
    let stat = (n as f64).sqrt() * (var - 1.0) / (2.0 * std::f64::consts::SQRT_2);
    let z = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(TestStat { stat, p_value: 2.0 * z.sf(stat.abs()) })
}

/// Standardized residuals `w_i / ψ_i` of the active observations, per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub days: Vec<(u32, Vec<f64>)>,
}

impl ResidualSeries {
    pub fn values(&self) -> Vec<f64> {
        self.days.iter().flat_map(|(_, v)| v.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.days.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn ratios(series: &DurationSeries, path: &PsiPath) -> ResidualSeries {
    ResidualSeries {
        days: series
            .days
            .iter()
            .zip(&path.days)
            .map(|(d, p)| {
                let v = d.entries[p.first_active..]
                    .iter()
                    .zip(&p.psi[p.first_active..])
                    .map(|(e, psi)| e.duration / psi)
                    .collect();
                (d.day_index, v)
            })
            .collect(),
    }
}

pub fn residuals(spec: &AcdSpec, series: &DurationSeries) -> Result<ResidualSeries> {
    let path = filter_psi(spec, series)?;
    Ok(ratios(series, &path))
}

/// `F_ε(w_i / ψ_i)` for the active observations.
pub fn pit(series: &DurationSeries, spec: &AcdSpec) -> Result<Vec<f64>> {
    let r = residuals(spec, series)?;
    Ok(r.values().into_iter().map(|x| spec.innovation.cdf(x)).collect())
}

/// Chi-squared statistic on `n_categories` equal-width bins of `[0, 1]`.
pub fn pit_chisq(q: &[f64], n_categories: usize) -> Result<ChiSquareTest> {
    if q.is_empty() {
        return Err(AcdError::Empty("no PIT values".into()));
    }
    if n_categories < 2 {
        return Err(AcdError::Parameter("at least two categories are needed".into()));
    }
    let mut counts = vec![0usize; n_categories];
    for &v in q {
        let b = ((v * n_categories as f64) as usize).min(n_categories - 1);
        counts[b] += 1;
    }
    let expected = q.len() as f64 / n_categories as f64;
    let chi2 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let df = n_categories - 1;
    Ok(ChiSquareTest { chi2, p_value: chi2_sf(chi2, df), df })
}

/// Sample autocorrelations for lags `1..=max_lag`.
pub fn correlogram(x: &[f64], max_lag: usize) -> Result<Vec<(usize, f64)>> {
    if x.len() <= max_lag {
        return Err(AcdError::Validation(format!(
            "correlogram needs more than {max_lag} observations, got {}",
            x.len()
        )));
    }
    let rho = stats::autocorrelations(x, max_lag).ok_or_else(|| AcdError::Undefined("zero-variance series".into()))?;
    Ok(rho.into_iter().enumerate().map(|(k, r)| (k + 1, r)).collect())
}

/// Writes `lag,acf` rows, lag 0 included as 1.
pub fn write_correlogram_csv<W: Write>(out: W, acf: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lag", "acf"])?;
    w.write_record(["0", "1"])?;
    for (k, r) in acf {
        w.write_record([k.to_string(), format!("{r}")])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticOptions {
    pub lb_lags: usize,
    pub pit_bins: usize,
    pub acf_lags: usize,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        Self { lb_lags: 20, pit_bins: 20, acf_lags: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub model: String,
    pub n: usize,
    pub residual_mean: f64,
    pub residual_sd: f64,
    pub lb: LjungBox,
    /// Only meaningful for exponential innovations.
    pub dispersion: TestStat,
    pub pit_chisq: ChiSquareTest,
    pub acf: Vec<f64>,
}

pub fn diagnose(spec: &AcdSpec, series: &DurationSeries, opts: &DiagnosticOptions) -> Result<DiagnosticReport> {
    let r = residuals(spec, series)?.values();
    let q: Vec<f64> = r.iter().map(|&x| spec.innovation.cdf(x)).collect();
    let acf_lags = opts.acf_lags.min(r.len().saturating_sub(1));
    Ok(DiagnosticReport {
        model: spec.name(),
        n: r.len(),
        residual_mean: stats::mean(&r),
        residual_sd: stats::sample_variance(&r).sqrt(),
        lb: ljung_box(&r, opts.lb_lags)?,
        dispersion: excess_dispersion_test(&r)?,
        pit_chisq: pit_chisq(&q, opts.pit_bins)?,
        acf: correlogram(&r, acf_lags)?.into_iter().map(|(_, v)| v).collect(),
    })
}
