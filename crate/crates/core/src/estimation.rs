//! Maximum-likelihood estimation of ACD models.

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::duration::DurationSeries;
use crate::error::{AcdError, Result};
use crate::model::{loglik, loglik_gradient, AcdSpec};
use crate::optim::{minimize, BfgsOptions, BfgsResult, Status};
use crate::rng::sub_rng;

/// Divides the series by its sample mean and returns that mean.
pub fn normalize(series: &DurationSeries) -> Result<(DurationSeries, f64)> {
    let v = series.values();
    if v.is_empty() {
        return Err(AcdError::Empty("cannot normalize an empty series".into()));
    }
    if let Some(i) = v.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(AcdError::Domain(format!("normalization needs positive durations; observation {i} is {}", v[i])));
    }
    let scale = v.iter().sum::<f64>() / v.len() as f64;
    Ok((series.map_durations(|e| e.duration / scale), scale))
}

/// `-2 LL + p ln n`.
pub fn bic(loglik: f64, n_params: usize, n_obs: usize) -> f64 {
    -2.0 * loglik + n_params as f64 * (n_obs as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_starts: usize,
    /// Multiplicative jitter half-width for starts after the first.
    pub jitter: f64,
    pub seed: u64,
    pub bfgs: BfgsOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { n_starts: 5, jitter: 0.2, seed: 1, bfgs: BfgsOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Fitted specification, in the units of the data passed to the fit.
    pub spec: AcdSpec,
    pub model: String,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    /// White (sandwich) standard errors; NaN when the Hessian is singular.
    pub std_errors: Vec<f64>,
    /// Inverse-Hessian standard errors, for comparison.
    pub hessian_std_errors: Vec<f64>,
    pub std_error_note: Option<String>,
    pub loglik: f64,
    pub bic: f64,
    pub n_params: usize,
    pub n_obs: usize,
    pub convergence: Status,
    pub iterations: usize,
    /// Sample mean divided out before fitting; 1 when the data were used as given.
    pub normalization_constant: f64,
    /// Max-norm of the per-observation gradient at the optimum.
    pub gradient_max_norm: f64,
    /// Index of the winning start.
    pub start_index: usize,
    /// Log-likelihood at each start point (`None` for infeasible starts).
    pub start_logliks: Vec<Option<f64>>,
    pub negative_coefficients: bool,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.param_names.iter().position(|n| n == name)?;
        Some((self.params[i], self.std_errors[i]))
    }

    /// `ω` in the units of the un-normalized data (linear form).
    pub fn omega_raw(&self) -> f64 {
        self.spec.omega * self.normalization_constant
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StdErrors {
    pub robust: Vec<f64>,
    pub inverse_hessian: Vec<f64>,
}

/// Sandwich `H⁻¹ (Σ s sᵀ) H⁻¹` with a central-difference Hessian of the total
/// log-likelihood built from the analytic gradient.
pub fn robust_std_errors(spec: &AcdSpec, series: &DurationSeries) -> Result<StdErrors> {
    let theta = spec.params();
    let p = theta.len();
    let at = loglik_gradient(spec, series, true)?;
    let scores = at.scores.expect("scores requested");
    let mut hess = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let h = 1e-5 * theta[j].abs().max(1.0);
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[j] += h;
        dn[j] -= h;
        let gu = loglik_gradient(&spec.with_params(&up), series, false)?.gradient;
        let gd = loglik_gradient(&spec.with_params(&dn), series, false)?.gradient;
        for i in 0..p {
            hess[(i, j)] = (gu[i] - gd[i]) / (2.0 * h);
        }
    }
    let info = -(&hess + hess.transpose()) * 0.5;
    let inv = info.clone().try_inverse().ok_or(AcdError::SingularHessian)?;
    if (0..p).any(|i| !(inv[(i, i)] > 0.0) || !inv[(i, i)].is_finite()) {
        return Err(AcdError::SingularHessian);
    }
    let mut opg = DMatrix::<f64>::zeros(p, p);
    for row in scores.chunks_exact(p) {
        for i in 0..p {
            for j in 0..=i {
                opg[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            opg[(j, i)] = opg[(i, j)];
        }
    }
    let sandwich = &inv * opg * &inv;
    Ok(StdErrors {
        robust: (0..p).map(|i| sandwich[(i, i)].max(0.0).sqrt()).collect(),
        inverse_hessian: (0..p).map(|i| inv[(i, i)].sqrt()).collect(),
    })
}

struct Objective<'a> {
    template: &'a AcdSpec,
    series: &'a DurationSeries,
    n_mean: usize,
    n: f64,
}

impl Objective<'_> {
    fn to_spec(&self, theta: &[f64]) -> AcdSpec {
        let mut nat = theta.to_vec();
        for v in &mut nat[self.n_mean..] {
            *v = v.exp();
        }
        self.template.with_params(&nat)
    }

    fn to_internal(&self, spec: &AcdSpec) -> Vec<f64> {
        let mut t = spec.params();
        for v in &mut t[self.n_mean..] {
            *v = v.ln();
        }
        t
    }

    fn eval(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let spec = self.to_spec(theta);
        if spec.innovation.validate().is_err() {
            return None;
        }
        let r = loglik_gradient(&spec, self.series, false).ok()?;
        let mut g: Vec<f64> = r.gradient.iter().map(|v| -v / self.n).collect();
        for (gi, th) in g[self.n_mean..].iter_mut().zip(&theta[self.n_mean..]) {
            *gi *= th.exp();
        }
        Some((-r.total / self.n, g))
    }
}

/// Multi-start quasi-Newton maximization of the log-likelihood of `series`
/// (expected to be normalized) for the form, orders and family of `template`.
pub fn fit_mle(series: &DurationSeries, template: &AcdSpec, opts: &FitOptions) -> Result<FitResult> {
    template.validate()?;
    if let Some(e) = series.entries().find(|e| !(e.duration > 0.0)) {
        return Err(AcdError::Domain(format!("fitting needs strictly positive durations, found {}", e.duration)));
    }
    let n_obs = crate::model::filter_psi(template, series)
        .map(|p| p.n_active())
        .unwrap_or_else(|_| series.len());
    let n_params = template.n_params();
    if n_obs < 10 * n_params {
        return Err(AcdError::Validation(format!(
            "{n_obs} observations are too few for {n_params} parameters (need at least {})",
            10 * n_params
        )));
    }
    let obj = Objective { template, series, n_mean: template.n_mean_params(), n: n_obs as f64 };
    let base = obj.to_internal(template);
    let n_starts = opts.n_starts.max(1);

    let runs: Vec<(Option<f64>, Option<BfgsResult>)> = (0..n_starts)
        .into_par_iter()
        .map(|i| {
            let start = if i == 0 {
                obj.eval(&base).map(|v| (base.clone(), v.0))
            } else {
                let mut rng = sub_rng(opts.seed, i as u64);
                (0..50).find_map(|_| {
                    let th: Vec<f64> = base
                        .iter()
                        .enumerate()
                        .map(|(j, &b)| {
                            let u: f64 = rng.random_range(-1.0..1.0);
                            if j >= obj.n_mean {
                                // shapes live on a log scale
                                b + (1.0 + opts.jitter * u).ln()
                            } else {
                                b * (1.0 + opts.jitter * u)
                            }
                        })
                        .collect();
                    obj.eval(&th).map(|v| (th, v.0))
                })
            };
            match start {
                None => (None, None),
                Some((th, f0)) => (Some(-f0 * obj.n), minimize(|x| obj.eval(x), &th, &opts.bfgs)),
            }
        })
        .collect();

    let start_logliks: Vec<Option<f64>> = runs.iter().map(|r| r.0).collect();
    let mut best: Option<(usize, &BfgsResult)> = None;
    for (i, (_, r)) in runs.iter().enumerate() {
        if let Some(r) = r {
            if best.is_none_or(|(_, b)| r.f < b.f) {
                best = Some((i, r));
            }
        }
    }
    let Some((start_index, res)) = best else {
        return Err(AcdError::Convergence(format!(
            "all {n_starts} starts were infeasible for {}",
            template.name()
        )));
    };

    let spec = obj.to_spec(&res.x);
    let ll = loglik(&spec, series)?;
    let (std_errors, hessian_std_errors, note) = match robust_std_errors(&spec, series) {
        Ok(se) => (se.robust, se.inverse_hessian, None),
        Err(e) => (vec![f64::NAN; n_params], vec![f64::NAN; n_params], Some(e.to_string())),
    };
    let grad_nat = loglik_gradient(&spec, series, false)?.gradient;
    Ok(FitResult {
        model: spec.name(),
        param_names: spec.param_names(),
        params: spec.params(),
        negative_coefficients: spec.has_negative_coefficients(),
        spec,
        std_errors,
        hessian_std_errors,
        std_error_note: note,
        loglik: ll.total,
        bic: bic(ll.total, n_params, ll.n_obs()),
        n_params,
        n_obs: ll.n_obs(),
        convergence: res.status,
        iterations: res.iterations,
        normalization_constant: 1.0,
        gradient_max_norm: grad_nat.iter().fold(0.0f64, |m, g| m.max(g.abs())) / ll.n_obs() as f64,
        start_index,
        start_logliks,
    })
}

/// Normalizes by the sample mean, then fits.
pub fn fit_normalized(series: &DurationSeries, template: &AcdSpec, opts: &FitOptions) -> Result<FitResult> {
    let (norm, scale) = normalize(series)?;
    let mut fit = fit_mle(&norm, template, opts)?;
    fit.normalization_constant = scale;
    Ok(fit)
}

/// One column of an estimation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub fit: FitResult,
    /// Ljung-Box statistic of the standardized residuals.
    pub lb: Option<f64>,
}

fn cell(fit: &FitResult, name: &str) -> String {
    match fit.param(name) {
        Some((v, se)) if se.is_finite() => format!("{v:.4} ({se:.4})"),
        Some((v, _)) => format!("{v:.4} (-)"),
        None => String::new(),
    }
}

/// Tab-separated table with rows ω, α_1, β_1, α_2, diagnostics.
pub fn render_table(title: &str, cols: &[TableColumn]) -> String {
    let mut lines = Vec::new();
    let header: Vec<String> = std::iter::once(title.to_string()).chain(cols.iter().map(|c| c.fit.model.clone())).collect();
    lines.push(header.join("\t"));
    for (label, name) in [("ω", "omega"), ("α_1", "alpha1"), ("β_1", "beta1"), ("α_2", "alpha2")] {
        let row: Vec<String> = std::iter::once(label.to_string()).chain(cols.iter().map(|c| cell(&c.fit, name))).collect();
        lines.push(row.join("\t"));
    }
    lines.push(format!("Diagnostics{}", "\t".repeat(cols.len())));
    let row = |label: &str, f: &dyn Fn(&TableColumn) -> String| {
        std::iter::once(label.to_string()).chain(cols.iter().map(f)).collect::<Vec<_>>().join("\t")
    };
    lines.push(row("Sample size", &|c| c.fit.n_obs.to_string()));
    lines.push(row("LL", &|c| format!("{:.0}", c.fit.loglik)));
    lines.push(row("BIC", &|c| format!("{:.0}", c.fit.bic)));
    lines.push(row("LB", &|c| c.lb.map(|v| format!("{v:.0}")).unwrap_or_default()));
    lines.join("\n") + "\n"
}
