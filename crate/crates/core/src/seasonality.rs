//! Deterministic time-of-day factors and their removal from durations.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::duration::{DurationSeries, SeasonalState, SESSION_CLOSE, SESSION_OPEN};
use crate::error::{AcdError, Result};

/// Lower bound applied to every profile evaluation.
pub const PROFILE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ProfileForm {
    /// Natural cubic spline through `(knots, values)`; `second_derivatives`
    /// are the solved spline moments (zero at both ends).
    Spline { knots: Vec<f64>, values: Vec<f64>, second_derivatives: Vec<f64> },
    /// `intercept + trend·t̄ + Σ cos_j cos(2πj t̄) + sin_j sin(2πj t̄)` with
    /// `t̄` the elapsed fraction of the session.
    Fourier {
        intercept: f64,
        trend: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
        /// Standard errors in the order intercept, trend, cos_1, sin_1, ...
        std_errors: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiurnalProfile {
    pub form: ProfileForm,
    pub session_open: f64,
    pub session_close: f64,
}

impl DiurnalProfile {
    pub fn spline(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(AcdError::Validation("spline needs matching, non-empty knots and values".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AcdError::Validation("spline knots must be strictly increasing".into()));
        }
        let second_derivatives = natural_spline_moments(&knots, &values);
        Ok(Self {
            form: ProfileForm::Spline { knots, values, second_derivatives },
            session_open: SESSION_OPEN,
            session_close: SESSION_CLOSE,
        })
    }

    pub fn fourier(intercept: f64, trend: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if cos.len() != sin.len() {
            return Err(AcdError::Validation("cos and sin coefficient counts differ".into()));
        }
        let p = 2 + 2 * cos.len();
        Ok(Self {
            form: ProfileForm::Fourier { intercept, trend, cos, sin, std_errors: vec![0.0; p] },
            session_open: SESSION_OPEN,
            session_close: SESSION_CLOSE,
        })
    }

    /// `s(t)` for a clock time in seconds; times outside the session are
    /// clamped to its bounds.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(self.session_open, self.session_close);
        let v = match &self.form {
            ProfileForm::Spline { knots, values, second_derivatives } => {
                eval_spline(knots, values, second_derivatives, t)
            }
            ProfileForm::Fourier { intercept, trend, cos, sin, .. } => {
                let u = (t - self.session_open) / (self.session_close - self.session_open);
                let mut v = intercept + trend * u;
                for (j, (c, s)) in cos.iter().zip(sin).enumerate() {
                    let a = 2.0 * std::f64::consts::PI * (j + 1) as f64 * u;
                    v += c * a.cos() + s * a.sin();
                }
                v
            }
        };
        v.max(PROFILE_FLOOR)
    }

    /// `(t, s(t))` on a grid of `step` seconds across the session.
    pub fn grid(&self, step: f64) -> Vec<(f64, f64)> {
        let n = ((self.session_close - self.session_open) / step).round() as usize;
        (0..=n)
            .map(|i| {
                let t = (self.session_open + i as f64 * step).min(self.session_close);
                (t, self.eval(t))
            })
            .collect()
    }

    /// Writes `time,factor` on a one-minute grid.
    pub fn write_grid_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "factor"])?;
        for (t, s) in self.grid(60.0) {
            w.write_record([format!("{t}"), format!("{s}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Second derivatives of the natural cubic spline through the points.
fn natural_spline_moments(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Tridiagonal system for interior moments (Thomas algorithm).
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut lower = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        diag[i - 1] = (h0 + h1) / 3.0;
        lower[i - 1] = h0 / 6.0;
        upper[i - 1] = h1 / 6.0;
        rhs[i - 1] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
    }
    for i in 1..k {
        let f = lower[i] / diag[i - 1];
        diag[i] -= f * upper[i - 1];
        rhs[i] -= f * rhs[i - 1];
    }
    let mut sol = vec![0.0; k];
    sol[k - 1] = rhs[k - 1] / diag[k - 1];
    for i in (0..k - 1).rev() {
        sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
    }
    m[1..n - 1].copy_from_slice(&sol);
    m
}

fn eval_spline(x: &[f64], y: &[f64], m: &[f64], t: f64) -> f64 {
    let n = x.len();
    if n == 1 {
        return y[0];
    }
    // Linear continuation outside the knot range (zero curvature at the ends).
    if t <= x[0] {
        let h = x[1] - x[0];
        let slope = (y[1] - y[0]) / h - h * m[1] / 6.0;
        return y[0] + slope * (t - x[0]);
    }
    if t >= x[n - 1] {
        let h = x[n - 1] - x[n - 2];
        let slope = (y[n - 1] - y[n - 2]) / h + h * m[n - 2] / 6.0;
        return y[n - 1] + slope * (t - x[n - 1]);
    }
    let i = x.partition_point(|&k| k <= t).saturating_sub(1).min(n - 2);
    let h = x[i + 1] - x[i];
    let a = (x[i + 1] - t) / h;
    let b = (t - x[i]) / h;
    a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
}

fn require_raw(series: &DurationSeries) -> Result<()> {
    if series.seasonal_state != SeasonalState::Raw {
        return Err(AcdError::State("seasonal profile estimation expects raw durations".into()));
    }
    Ok(())
}

/// Spline through pooled bin means placed at the bin centers.
pub fn estimate_spline_profile(series: &DurationSeries, bin_minutes: f64) -> Result<DiurnalProfile> {
    require_raw(series)?;
    let span = SESSION_CLOSE - SESSION_OPEN;
    let width = bin_minutes * 60.0;
    let nb = (span / width).round();
    if !(bin_minutes > 0.0) || nb < 1.0 || (nb * width - span).abs() > 1e-9 {
        return Err(AcdError::Parameter(format!(
            "bin width of {bin_minutes} minutes does not divide the session evenly"
        )));
    }
    let nb = nb as usize;
    let mut sum = vec![0.0; nb];
    let mut count = vec![0usize; nb];
    for e in series.entries() {
        if e.start < SESSION_OPEN || e.start > SESSION_CLOSE {
            continue;
        }
        let b = (((e.start - SESSION_OPEN) / width) as usize).min(nb - 1);
        sum[b] += e.duration;
        count[b] += 1;
    }
    if let Some(b) = count.iter().position(|&c| c == 0) {
        return Err(AcdError::EmptyBin {
            bin: b,
            start: SESSION_OPEN + b as f64 * width,
            end: SESSION_OPEN + (b + 1) as f64 * width,
        });
    }
    let knots = (0..nb).map(|b| SESSION_OPEN + (b as f64 + 0.5) * width).collect();
    let values = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    DiurnalProfile::spline(knots, values)
}

/// Least-squares Fourier profile with `q` harmonics, intercept and linear trend.
pub fn estimate_fourier_profile(series: &DurationSeries, q: usize) -> Result<DiurnalProfile> {
    require_raw(series)?;
    let p = 2 + 2 * q;
    let n = series.len();
    if n <= p {
        return Err(AcdError::RankDeficient);
    }
    let span = SESSION_CLOSE - SESSION_OPEN;
    let basis = |t: f64, row: &mut [f64]| {
        let u = ((t - SESSION_OPEN) / span).clamp(0.0, 1.0);
        row[0] = 1.0;
        row[1] = u;
        for j in 0..q {
            let a = 2.0 * std::f64::consts::PI * (j + 1) as f64 * u;
            row[2 + 2 * j] = a.cos();
            row[3 + 2 * j] = a.sin();
        }
    };
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for e in series.entries() {
        basis(e.start, &mut row);
        for i in 0..p {
            xty[i] += row[i] * e.duration;
            for j in 0..=i {
                xtx[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            xtx[(j, i)] = xtx[(i, j)];
        }
    }
    let sv = xtx.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > smax * 1e-12) {
        return Err(AcdError::RankDeficient);
    }
    let chol = xtx.clone().cholesky().ok_or(AcdError::RankDeficient)?;
    let beta = chol.solve(&xty);
    let mut rss = 0.0;
    for e in series.entries() {
        basis(e.start, &mut row);
        let fit: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        rss += (e.duration - fit).powi(2);
    }
    let sigma2 = rss / (n - p) as f64;
    let inv = chol.inverse();
    let std_errors = (0..p).map(|i| (sigma2 * inv[(i, i)]).sqrt()).collect();
    Ok(DiurnalProfile {
        form: ProfileForm::Fourier {
            intercept: beta[0],
            trend: beta[1],
            cos: (0..q).map(|j| beta[2 + 2 * j]).collect(),
            sin: (0..q).map(|j| beta[3 + 2 * j]).collect(),
            std_errors,
        },
        session_open: SESSION_OPEN,
        session_close: SESSION_CLOSE,
    })
}

/// Divides every duration by the factor at its start time.
pub fn deseasonalize(series: &DurationSeries, profile: &DiurnalProfile) -> Result<DurationSeries> {
    if series.seasonal_state != SeasonalState::Raw {
        return Err(AcdError::State("series is already deseasonalized".into()));
    }
    let mut out = series.map_durations(|e| e.duration / profile.eval(e.start));
    out.seasonal_state = SeasonalState::Deseasonalized;
    Ok(out)
}

/// Multiplies the factor back in.
pub fn reseasonalize(series: &DurationSeries, profile: &DiurnalProfile) -> Result<DurationSeries> {
    if series.seasonal_state != SeasonalState::Deseasonalized {
        return Err(AcdError::State("series is not deseasonalized".into()));
    }
    let mut out = series.map_durations(|e| e.duration * profile.eval(e.start));
    out.seasonal_state = SeasonalState::Raw;
    Ok(out)
}
