//! Conditional-mean recursion, log-likelihood and its analytic gradient.
//!
//! Each trading day is filtered independently. The first active observation
//! of a day receives the initialization value and all pre-sample lags of `w`
//! and `ψ` are set to that value as well.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::innovation::Kernel;
use super::spec::{AcdSpec, InitRule, MeanForm};
use crate::duration::{DaySegment, DurationSeries, SESSION_OPEN};
use crate::error::{AcdError, Result};
use crate::stats::mean;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiDay {
    pub day_index: u32,
    /// Observations before this index fall in the initialization window and
    /// are excluded from the likelihood.
    pub first_active: usize,
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiPath {
    pub days: Vec<PsiDay>,
}

impl PsiPath {
    pub fn len(&self) -> usize {
        self.days.iter().map(|d| d.psi.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All ψ values, window observations included.
    pub fn values(&self) -> Vec<f64> {
        self.days.iter().flat_map(|d| d.psi.iter().copied()).collect()
    }

    pub fn n_active(&self) -> usize {
        self.days.iter().map(|d| d.psi.len() - d.first_active).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLik {
    pub total: f64,
    /// One entry per active observation, in series order.
    pub contributions: Vec<f64>,
}

impl LogLik {
    pub fn n_obs(&self) -> usize {
        self.contributions.len()
    }
}

/// Log-likelihood with gradient in the natural parameter order of
/// [`AcdSpec::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikGrad {
    pub total: f64,
    pub gradient: Vec<f64>,
    pub n_obs: usize,
    /// Row-major `n_obs x n_params` per-observation scores when requested.
    pub scores: Option<Vec<f64>>,
}

#[derive(Clone, Copy, PartialEq)]
enum Need {
    Psi,
    Loglik,
    Gradient { scores: bool },
}

struct Init {
    /// Per-day (init value, first active index).
    days: Vec<(f64, usize)>,
    /// Derivative of the initial recursion state with respect to the mean
    /// parameters; empty when the init value does not depend on them.
    dstate: Vec<f64>,
}

fn initialization(spec: &AcdSpec, series: &DurationSeries) -> Result<Init> {
    let p = spec.n_mean_params();
    match spec.init_rule {
        InitRule::UnconditionalMean => {
            let a: f64 = spec.alpha.iter().sum();
            let b: f64 = spec.beta.iter().sum();
            let (value, dstate) = match spec.mean_form {
                MeanForm::Linear => {
                    let denom = 1.0 - a - b;
                    if !(denom > 0.0) {
                        return Err(AcdError::NonStationary(format!(
                            "unconditional-mean initialization needs persistence < 1, got {}",
                            a + b
                        )));
                    }
                    let mu = spec.omega / denom;
                    let mut d = vec![mu / denom; p];
                    d[0] = 1.0 / denom;
                    (mu, d)
                }
                MeanForm::LogType2 => {
                    let denom = 1.0 - b;
                    if !(denom > 0.0) {
                        return Err(AcdError::NonStationary(format!(
                            "unconditional-mean initialization needs sum(beta) < 1, got {b}"
                        )));
                    }
                    let level = (spec.omega + a) / denom;
                    let mut d = vec![1.0 / denom; p];
                    for v in d.iter_mut().skip(1 + spec.alpha.len()) {
                        *v = level / denom;
                    }
                    (level.exp(), d)
                }
                MeanForm::LogType1 => {
                    return Err(AcdError::Unsupported(
                        "unconditional-mean initialization is not available for log_type1; use sample_mean or first_window_mean".into(),
                    ))
                }
            };
            Ok(Init { days: series.days.iter().map(|_| (value, 0)).collect(), dstate })
        }
        InitRule::SampleMean => {
            let m = mean(&series.values());
            Ok(Init { days: series.days.iter().map(|_| (m, 0)).collect(), dstate: vec![] })
        }
        InitRule::FirstWindowMean { minutes } => {
            let cutoff = SESSION_OPEN + minutes * 60.0;
            let overall = mean(&series.values());
            let days = series
                .days
                .iter()
                .map(|d| {
                    let k = d.entries.iter().take_while(|e| e.start < cutoff).count();
                    if k == 0 {
                        (overall, 0)
                    } else {
                        let s: f64 = d.entries[..k].iter().map(|e| e.duration).sum();
                        (s / k as f64, k)
                    }
                })
                .collect();
            Ok(Init { days, dstate: vec![] })
        }
    }
}

/// Next recursion state from the histories of inputs `u` and states `s`
/// (positions `0..k` filled); lags reaching before position 0 use the
/// pre-sample values.
#[inline]
pub(crate) fn recursion_step(spec: &AcdSpec, k: usize, u: &[f64], s: &[f64], u0: f64, s0: f64) -> f64 {
    let mut acc = spec.omega;
    for (j, a) in spec.alpha.iter().enumerate() {
        acc += a * if k > j { u[k - j - 1] } else { u0 };
    }
    for (j, b) in spec.beta.iter().enumerate() {
        acc += b * if k > j { s[k - j - 1] } else { s0 };
    }
    acc
}

/// Initial value used by the unconditional-mean rule: the stationary mean
/// for the linear form, `exp` of the stationary mean of `ln ψ` for log forms.
pub(crate) fn unconditional_level(spec: &AcdSpec) -> Result<f64> {
    let a: f64 = spec.alpha.iter().sum();
    let b: f64 = spec.beta.iter().sum();
    let (num, den) = match spec.mean_form {
        MeanForm::Linear => return if 1.0 - a - b > 0.0 {
            Ok(spec.omega / (1.0 - a - b))
        } else {
            Err(AcdError::NonStationary(format!("persistence {} >= 1", a + b)))
        },
        MeanForm::LogType1 => (spec.omega + a * spec.innovation.mean_log(), 1.0 - a - b),
        MeanForm::LogType2 => (spec.omega + a, 1.0 - b),
    };
    if !(den > 0.0) {
        return Err(AcdError::NonStationary("log recursion is not stationary".into()));
    }
    Ok((num / den).exp())
}

struct DayOut {
    psi: Vec<f64>,
    first_active: usize,
    contributions: Vec<f64>,
    total: f64,
    gradient: Vec<f64>,
    scores: Vec<f64>,
}

struct Ctx<'a> {
    spec: &'a AcdSpec,
    kernel: Kernel,
    n_mean: usize,
    n_total: usize,
    dstate0: &'a [f64],
}

fn run_day(ctx: &Ctx, day: &DaySegment, init: f64, first: usize, offset: usize, need: Need) -> Result<DayOut> {
    let spec = ctx.spec;
    let form = spec.mean_form;
    let (m, q) = spec.orders();
    let pm = ctx.n_mean;
    let pt = ctx.n_total;
    let w: Vec<f64> = day.entries.iter().map(|e| e.duration).collect();
    let n = w.len();
    let n_act = n.saturating_sub(first);
    let grad = matches!(need, Need::Gradient { .. });
    let want_scores = matches!(need, Need::Gradient { scores: true });

    if !(init.is_finite() && init > 0.0) {
        return Err(AcdError::Positivity { index: offset + first.min(n.saturating_sub(1)), value: init });
    }
    if form == MeanForm::LogType1 {
        if let Some(k) = w[first.min(n)..].iter().position(|&v| v <= 0.0) {
            return Err(AcdError::Domain(format!(
                "log_type1 recursion needs positive durations; observation {} is {}",
                offset + first + k,
                w[first + k]
            )));
        }
    }

    // Recursion state s (ψ for linear, ln ψ for log forms) and the lagged
    // input u (w, ln w or w/ψ) for active observations.
    let s0 = if form == MeanForm::Linear { init } else { init.ln() };
    let u0 = match form {
        MeanForm::Linear => init,
        MeanForm::LogType1 => init.ln(),
        MeanForm::LogType2 => 1.0,
    };
    // derivative of presample state / input
    let mut ds0 = vec![0.0; pm];
    if grad && !ctx.dstate0.is_empty() {
        ds0.copy_from_slice(ctx.dstate0);
    }
    let du0: Vec<f64> = match form {
        MeanForm::Linear => ds0.clone(),
        MeanForm::LogType1 => ds0.clone(),
        MeanForm::LogType2 => vec![0.0; pm],
    };

    let mut s = vec![0.0; n_act];
    let mut u = vec![0.0; n_act];
    let mut ds = if grad { vec![0.0; n_act * pm] } else { Vec::new() };
    let mut du = if grad { vec![0.0; n_act * pm] } else { Vec::new() };

    let mut contributions = Vec::new();
    if need != Need::Psi {
        contributions.reserve(n_act);
    }
    let mut total = 0.0;
    let mut gradient = vec![0.0; if grad { pt } else { 0 }];
    let mut scores = Vec::new();
    if want_scores {
        scores.reserve(n_act * pt);
    }
    let mut row = vec![0.0; pt];

    for k in 0..n_act {
        let gi = offset + first + k;
        let wk = w[first + k];
        let sk = if k == 0 { s0 } else { recursion_step(spec, k, &u, &s, u0, s0) };
        let psi = match form {
            MeanForm::Linear => {
                if !(sk > 0.0) {
                    if sk.is_nan() {
                        return Err(AcdError::NonFinite { index: gi });
                    }
                    return Err(AcdError::Positivity { index: gi, value: sk });
                }
                sk
            }
            _ => sk.exp(),
        };
        if !psi.is_finite() || psi <= 0.0 {
            return Err(AcdError::NonFinite { index: gi });
        }
        s[k] = sk;
        let ln_psi = if form == MeanForm::Linear { psi.ln() } else { sk };
        let x = wk / psi;
        u[k] = match form {
            MeanForm::Linear => wk,
            MeanForm::LogType1 => wk.ln(),
            MeanForm::LogType2 => x,
        };

        if grad {
            let (lo, hi) = (k * pm, (k + 1) * pm);
            if k == 0 {
                ds[lo..hi].copy_from_slice(&ds0);
            } else {
                // d s_k = e_ω + Σ u_{k-j} e_{α_j} + Σ s_{k-j} e_{β_j}
                //         + Σ α_j d u_{k-j} + Σ β_j d s_{k-j}
                let mut acc = vec![0.0; pm];
                acc[0] = 1.0;
                for j in 1..=m {
                    let aj = spec.alpha[j - 1];
                    if k >= j {
                        acc[j] += u[k - j];
                        let b = (k - j) * pm;
                        for (a, v) in acc.iter_mut().zip(&du[b..b + pm]) {
                            *a += aj * v;
                        }
                    } else {
                        acc[j] += u0;
                        for (a, v) in acc.iter_mut().zip(&du0) {
                            *a += aj * v;
                        }
                    }
                }
                for j in 1..=q {
                    let bj = spec.beta[j - 1];
                    if k >= j {
                        acc[m + j] += s[k - j];
                        let b = (k - j) * pm;
                        for (a, v) in acc.iter_mut().zip(&ds[b..b + pm]) {
                            *a += bj * v;
                        }
                    } else {
                        acc[m + j] += s0;
                        for (a, v) in acc.iter_mut().zip(&ds0) {
                            *a += bj * v;
                        }
                    }
                }
                ds[lo..hi].copy_from_slice(&acc);
            }
            match form {
                MeanForm::Linear => {}
                MeanForm::LogType1 => {}
                MeanForm::LogType2 => {
                    for t in lo..hi {
                        du[t] = -x * ds[t];
                    }
                }
            }
        }

        if need == Need::Psi {
            continue;
        }
        if !(wk > 0.0) {
            return Err(AcdError::Domain(format!(
                "likelihood needs positive durations; observation {gi} is {wk}"
            )));
        }
        let ln_x = wk.ln() - ln_psi;
        let lk;
        if grad {
            let ev = ctx.kernel.eval(ln_x, x);
            lk = ev.log_p - ln_psi;
            // dl/d ln ψ
            let dl = -ev.x_dlogp_dx - 1.0;
            let scale = if form == MeanForm::Linear { dl / psi } else { dl };
            for t in 0..pm {
                row[t] = scale * ds[k * pm + t];
            }
            for (t, v) in row[pm..].iter_mut().enumerate() {
                *v = ev.dshape[t];
            }
            for (g, r) in gradient.iter_mut().zip(&row) {
                *g += r;
            }
            if want_scores {
                scores.extend_from_slice(&row);
            }
        } else {
            lk = ctx.kernel.log_density(ln_x, x) - ln_psi;
        }
        if !lk.is_finite() {
            return Err(AcdError::NonFinite { index: gi });
        }
        total += lk;
        contributions.push(lk);
    }

    let mut psi = vec![init; n];
    for k in 0..n_act {
        psi[first + k] = if form == MeanForm::Linear { s[k] } else { s[k].exp() };
    }
    Ok(DayOut { psi, first_active: first.min(n), contributions, total, gradient, scores })
}

fn run(spec: &AcdSpec, series: &DurationSeries, need: Need) -> Result<Vec<DayOut>> {
    spec.validate()?;
    let init = initialization(spec, series)?;
    let ctx = Ctx {
        spec,
        kernel: spec.innovation.kernel(),
        n_mean: spec.n_mean_params(),
        n_total: spec.n_params(),
        dstate0: &init.dstate,
    };
    let mut offsets = Vec::with_capacity(series.days.len());
    let mut acc = 0;
    for d in &series.days {
        offsets.push(acc);
        acc += d.entries.len();
    }
    series
        .days
        .par_iter()
        .zip(init.days.par_iter())
        .zip(offsets.par_iter())
        .map(|((day, &(value, first)), &off)| run_day(&ctx, day, value, first, off, need))
        .collect()
}

/// Conditional means for every observation of `series`.
pub fn filter_psi(spec: &AcdSpec, series: &DurationSeries) -> Result<PsiPath> {
    let out = run(spec, series, Need::Psi)?;
    Ok(PsiPath {
        days: out
            .into_iter()
            .zip(&series.days)
            .map(|(o, d)| PsiDay { day_index: d.day_index, first_active: o.first_active, psi: o.psi })
            .collect(),
    })
}

/// Total log-likelihood with per-observation contributions.
pub fn loglik(spec: &AcdSpec, series: &DurationSeries) -> Result<LogLik> {
    let out = run(spec, series, Need::Loglik)?;
    let mut total = 0.0;
    let mut contributions = Vec::new();
    for o in out {
        total += o.total;
        contributions.extend(o.contributions);
    }
    Ok(LogLik { total, contributions })
}

/// ψ path and log-likelihood from a single pass.
pub fn filter_with_loglik(spec: &AcdSpec, series: &DurationSeries) -> Result<(PsiPath, LogLik)> {
    let out = run(spec, series, Need::Loglik)?;
    let mut total = 0.0;
    let mut contributions = Vec::new();
    let mut days = Vec::with_capacity(out.len());
    for (o, d) in out.into_iter().zip(&series.days) {
        total += o.total;
        contributions.extend(o.contributions);
        days.push(PsiDay { day_index: d.day_index, first_active: o.first_active, psi: o.psi });
    }
    Ok((PsiPath { days }, LogLik { total, contributions }))
}

/// Log-likelihood and analytic gradient, optionally with per-observation scores.
pub fn loglik_gradient(spec: &AcdSpec, series: &DurationSeries, scores: bool) -> Result<LogLikGrad> {
    let out = run(spec, series, Need::Gradient { scores })?;
    let p = spec.n_params();
    let mut total = 0.0;
    let mut gradient = vec![0.0; p];
    let mut n_obs = 0;
    let mut all_scores = if scores { Some(Vec::new()) } else { None };
    for o in out {
        total += o.total;
        n_obs += o.contributions.len();
        for (g, v) in gradient.iter_mut().zip(&o.gradient) {
            *g += v;
        }
        if let Some(s) = all_scores.as_mut() {
            s.extend(o.scores);
        }
    }
    Ok(LogLikGrad { total, gradient, n_obs, scores: all_scores })
}
