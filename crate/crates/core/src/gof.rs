//! Unconditional distribution fitting and EDF goodness-of-fit tests with
//! Monte-Carlo critical values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma as GammaDist, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{digamma, gamma_lr, ln_gamma};

use crate::duration::DurationSeries;
use crate::error::{AcdError, Result};
use crate::rng::sub_rng;

/// Bounds applied to `z = F(x)` before taking logarithms.
pub const Z_CLAMP: f64 = 1e-15;

pub const STAT_NAMES: [&str; 5] = ["D", "V", "W2", "U2", "A2"];
pub const DEFAULT_LEVELS: [f64; 3] = [0.05, 0.025, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NullFamily {
    Exponential,
    Weibull,
    Gamma,
    /// Location is fixed, never estimated.
    GeneralizedPareto { location: f64 },
    Normal,
}

impl NullFamily {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exponential => "exponential",
            Self::Weibull => "weibull",
            Self::Gamma => "gamma",
            Self::GeneralizedPareto { .. } => "gpd",
            Self::Normal => "normal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(Self::Exponential),
            "weibull" => Ok(Self::Weibull),
            "gamma" => Ok(Self::Gamma),
            "gpd" | "generalized_pareto" | "pareto" => Ok(Self::GeneralizedPareto { location: 0.0 }),
            "normal" => Ok(Self::Normal),
            other => Err(AcdError::Parameter(format!("unknown null family '{other}'"))),
        }
    }
}

/// A fully specified null distribution.
///
/// The generalized Pareto uses `F(x) = 1 - (1 - k y/σ)^(1/k)`, `y = x - θ`,
/// with support `y <= σ/k` when `k > 0` (exponential limit at `k = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NullDistribution {
    Exponential { mean: f64 },
    Weibull { scale: f64, shape: f64 },
    Gamma { scale: f64, shape: f64 },
    GeneralizedPareto { scale: f64, shape: f64, location: f64 },
    Normal { mean: f64, sd: f64 },
}

impl NullDistribution {
    pub fn family(&self) -> NullFamily {
        match *self {
            Self::Exponential { .. } => NullFamily::Exponential,
            Self::Weibull { .. } => NullFamily::Weibull,
            Self::Gamma { .. } => NullFamily::Gamma,
            Self::GeneralizedPareto { location, .. } => NullFamily::GeneralizedPareto { location },
            Self::Normal { .. } => NullFamily::Normal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let ok = match *self {
            Self::Exponential { mean } => pos(mean),
            Self::Weibull { scale, shape } | Self::Gamma { scale, shape } => pos(scale) && pos(shape),
            Self::GeneralizedPareto { scale, shape, location } => pos(scale) && shape.is_finite() && location.is_finite(),
            Self::Normal { mean, sd } => mean.is_finite() && pos(sd),
        };
        if ok {
            Ok(())
        } else {
            Err(AcdError::Parameter(format!("invalid null distribution {self:?}")))
        }
    }

    /// Free parameters as `(name, value)`; a fixed GPD location is excluded.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Self::Exponential { mean } => vec![("mean", mean)],
            Self::Weibull { scale, shape } | Self::Gamma { scale, shape } => vec![("scale", scale), ("shape", shape)],
            Self::GeneralizedPareto { scale, shape, .. } => vec![("scale", scale), ("shape", shape)],
            Self::Normal { mean, sd } => vec![("mean", mean), ("sd", sd)],
        }
    }

    fn with_free(&self, p: &[f64]) -> Self {
        match *self {
            Self::Exponential { .. } => Self::Exponential { mean: p[0] },
            Self::Weibull { .. } => Self::Weibull { scale: p[0], shape: p[1] },
            Self::Gamma { .. } => Self::Gamma { scale: p[0], shape: p[1] },
            Self::GeneralizedPareto { location, .. } => Self::GeneralizedPareto { scale: p[0], shape: p[1], location },
            Self::Normal { .. } => Self::Normal { mean: p[0], sd: p[1] },
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Exponential { mean } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x / mean).exp_m1()
                }
            }
            Self::Weibull { scale, shape } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / scale).powf(shape)).exp_m1()
                }
            }
            Self::Gamma { scale, shape } => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_lr(shape, x / scale)
                }
            }
            Self::GeneralizedPareto { scale, shape, location } => {
                let y = x - location;
                if y <= 0.0 {
                    return 0.0;
                }
                if shape.abs() < 1e-12 {
                    return -(-y / scale).exp_m1();
                }
                let b = 1.0 - shape * y / scale;
                if b <= 0.0 {
                    1.0
                } else {
                    -((b.ln() / shape).exp_m1())
                }
            }
            Self::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").cdf(x),
        }
    }

    /// Log-density, `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Exponential { mean } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -mean.ln() - x / mean
                }
            }
            Self::Weibull { scale, shape } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = x / scale;
                shape.ln() - scale.ln() + (shape - 1.0) * z.ln() - z.powf(shape)
            }
            Self::Gamma { scale, shape } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                (shape - 1.0) * x.ln() - x / scale - shape * scale.ln() - ln_gamma(shape)
            }
            Self::GeneralizedPareto { scale, shape, location } => {
                let y = x - location;
                if y < 0.0 {
                    return f64::NEG_INFINITY;
                }
                if shape.abs() < 1e-12 {
                    return -scale.ln() - y / scale;
                }
                let b = 1.0 - shape * y / scale;
                if b <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -scale.ln() + (1.0 / shape - 1.0) * b.ln()
                }
            }
            Self::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    pub fn log_likelihood(&self, sample: &[f64]) -> f64 {
        sample.iter().map(|&x| self.ln_pdf(x)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
            Self::Weibull { scale, shape } => {
                let e: f64 = Exp1.sample(rng);
                scale * e.powf(1.0 / shape)
            }
            Self::Gamma { scale, shape } => GammaDist::new(shape, scale).expect("validated").sample(rng),
            Self::GeneralizedPareto { scale, shape, location } => {
                let u: f64 = rng.random();
                if shape.abs() < 1e-12 {
                    location - scale * (1.0 - u).ln()
                } else {
                    location + scale * (1.0 - (1.0 - u).powf(shape)) / shape
                }
            }
            Self::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
        }
    }

    /// Standard errors of the free parameters from the observed information
    /// (central-difference Hessian of the log-likelihood).
    pub fn std_errors(&self, sample: &[f64]) -> Vec<f64> {
        let p: Vec<f64> = self.params().iter().map(|(_, v)| *v).collect();
        let k = p.len();
        let ll = |q: &[f64]| self.with_free(q).log_likelihood(sample);
        let mut h = vec![vec![0.0; k]; k];
        let steps: Vec<f64> = p.iter().map(|v| 1e-4 * v.abs().max(1e-3)).collect();
        for i in 0..k {
            for j in 0..k {
                let f = |di: f64, dj: f64| {
                    let mut q = p.clone();
                    q[i] += di;
                    q[j] += dj;
                    ll(&q)
                };
                let (hi, hj) = (steps[i], steps[j]);
                h[i][j] = (f(hi, hj) - f(hi, -hj) - f(-hi, hj) + f(-hi, -hj)) / (4.0 * hi * hj);
            }
        }
        let m = nalgebra::DMatrix::from_fn(k, k, |i, j| -h[i][j]);
        match m.try_inverse() {
            Some(inv) => (0..k).map(|i| if inv[(i, i)] > 0.0 { inv[(i, i)].sqrt() } else { f64::NAN }).collect(),
            None => vec![f64::NAN; k],
        }
    }
}

fn check_sample(sample: &[f64], positive: bool) -> Result<()> {
    if sample.is_empty() {
        return Err(AcdError::Empty("empty sample".into()));
    }
    if let Some(x) = sample.iter().find(|x| !x.is_finite() || (positive && **x <= 0.0)) {
        return Err(AcdError::Domain(format!("sample value {x} is outside the family's support")));
    }
    Ok(())
}

fn is_constant(sample: &[f64]) -> bool {
    sample.iter().all(|&x| x == sample[0])
}

/// Maximum-likelihood fit of `family` to `sample`.
pub fn fit_null(sample: &[f64], family: NullFamily) -> Result<NullDistribution> {
    match family {
        NullFamily::Exponential => {
            check_sample(sample, true)?;
            Ok(NullDistribution::Exponential { mean: sample.iter().sum::<f64>() / sample.len() as f64 })
        }
        NullFamily::Weibull => fit_weibull(sample),
        NullFamily::Gamma => fit_gamma(sample),
        NullFamily::GeneralizedPareto { location } => fit_gpd(sample, location),
        NullFamily::Normal => {
            check_sample(sample, false)?;
            if sample.len() < 2 || is_constant(sample) {
                return Err(AcdError::Degenerate("normal fit needs a non-constant sample".into()));
            }
            let n = sample.len() as f64;
            let mean = sample.iter().sum::<f64>() / n;
            let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            Ok(NullDistribution::Normal { mean, sd: var.sqrt() })
        }
    }
}

/// Root of a decreasing function on `[lo, hi]` by bisection.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo >= 0.0 && fhi <= 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * (1.0 + mid.abs()) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

fn fit_weibull(sample: &[f64]) -> Result<NullDistribution> {
    check_sample(sample, true)?;
    if is_constant(sample) {
        return Err(AcdError::Degenerate("Weibull fit on a constant sample".into()));
    }
    let n = sample.len() as f64;
    let xmax = sample.iter().cloned().fold(0.0, f64::max);
    let lz: Vec<f64> = sample.iter().map(|x| (x / xmax).ln()).collect();
    let mean_lz = lz.iter().sum::<f64>() / n;
    // profile score in b: 1/b + mean(ln z) - Σ z^b ln z / Σ z^b, decreasing in b
    let score = |lb: f64| {
        let b = lb.exp();
        let (mut s0, mut s1) = (0.0, 0.0);
        for &l in &lz {
            let t = (b * l).exp();
            s0 += t;
            s1 += t * l;
        }
        1.0 / b + mean_lz - s1 / s0
    };
    let lb = bisect(score, -15.0, 8.0).ok_or_else(|| AcdError::Convergence("Weibull shape equation has no root".into()))?;
    Ok(weibull_with_shape(sample, lb.exp()))
}

/// Weibull MLE of the scale for a fixed shape `b`.
pub fn weibull_with_shape(sample: &[f64], shape: f64) -> NullDistribution {
    let n = sample.len() as f64;
    let xmax = sample.iter().cloned().fold(0.0, f64::max);
    let m = sample.iter().map(|x| (x / xmax).powf(shape)).sum::<f64>() / n;
    NullDistribution::Weibull { scale: xmax * m.powf(1.0 / shape), shape }
}

fn fit_gamma(sample: &[f64]) -> Result<NullDistribution> {
    check_sample(sample, true)?;
    if is_constant(sample) {
        return Err(AcdError::Degenerate("gamma fit on a constant sample".into()));
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let mean_ln = sample.iter().map(|x| x.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_ln;
    if !(s > 0.0) {
        return Err(AcdError::Degenerate("gamma fit needs dispersion in the sample".into()));
    }
    // ln a - ψ(a) = s, decreasing in a
    let f = |la: f64| {
        let a = la.exp();
        a.ln() - digamma(a) - s
    };
    let la = bisect(f, -25.0, 25.0).ok_or_else(|| AcdError::Convergence("gamma shape equation has no root".into()))?;
    let shape = la.exp();
    Ok(NullDistribution::Gamma { scale: mean / shape, shape })
}

fn fit_gpd(sample: &[f64], location: f64) -> Result<NullDistribution> {
    check_sample(sample, false)?;
    let y: Vec<f64> = sample.iter().map(|x| x - location).collect();
    if y.iter().any(|&v| v < 0.0) {
        return Err(AcdError::Domain(format!("sample values below the GPD location {location}")));
    }
    let n = y.len() as f64;
    let ymax = y.iter().cloned().fold(0.0, f64::max);
    if !(ymax > 0.0) || is_constant(&y) {
        return Err(AcdError::Degenerate("GPD fit on a degenerate sample".into()));
    }
    let ybar = y.iter().sum::<f64>() / n;
    // Profile over t = k/σ in (-inf, 1/ymax): k(t) = -S/n, σ = k/t,
    // l(t) = -n ln σ - n - S with S = Σ ln(1 - t y).
    let profile = |t: f64| -> Option<(f64, f64, f64)> {
        if t.abs() < 1e-14 / ymax {
            return Some((-n * ybar.ln() - n, ybar, 0.0));
        }
        let mut s = 0.0;
        for &v in &y {
            let b = 1.0 - t * v;
            if b <= 0.0 {
                return None;
            }
            s += b.ln();
        }
        let k = -s / n;
        let sigma = k / t;
        if !(sigma > 0.0) || k > 1.0 {
            return None;
        }
        Some((-n * sigma.ln() - n - s, sigma, k))
    };
    // t = (1 - e^u)/ymax maps u in (-inf, inf) onto (-inf, 1/ymax)
    let t_of = |u: f64| (1.0 - u.exp()) / ymax;
    let obj = |u: f64| profile(t_of(u)).map(|p| p.0).unwrap_or(f64::NEG_INFINITY);
    let grid: Vec<f64> = (0..=400).map(|i| -30.0 + i as f64 * 0.1).collect();
    let vals: Vec<f64> = grid.iter().map(|&u| obj(u)).collect();
    let (ib, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    if !vals[ib].is_finite() {
        return Err(AcdError::Convergence("GPD profile likelihood has no feasible point".into()));
    }
    // golden-section refinement around the best grid point
    let (mut a, mut b) = (grid[ib.saturating_sub(1)], grid[(ib + 1).min(grid.len() - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..100 {
        if obj(c) > obj(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let u = 0.5 * (a + b);
    let u = if obj(u) >= vals[ib] { u } else { grid[ib] };
    let (_, scale, shape) = profile(t_of(u)).expect("feasible point");
    Ok(NullDistribution::GeneralizedPareto { scale, shape, location })
}

/// EDF statistics of a sample against a hypothesized CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdfStatistics {
    pub d_plus: f64,
    pub d_minus: f64,
    pub d: f64,
    pub v: f64,
    pub w2: f64,
    pub u2: f64,
    pub a2: f64,
    /// Whether D⁺, D⁻, D and V carry the √n factor.
    pub scaled: bool,
    pub n: usize,
}

impl EdfStatistics {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "D" => Some(self.d),
            "V" => Some(self.v),
            "W2" => Some(self.w2),
            "U2" => Some(self.u2),
            "A2" => Some(self.a2),
            _ => None,
        }
    }
}

/// Statistics from `z_i = F(x_i)` values (any order).
pub fn edf_from_z(z: &[f64], scaled: bool) -> Result<EdfStatistics> {
    if z.is_empty() {
        return Err(AcdError::Empty("no observations for EDF statistics".into()));
    }
    let mut z: Vec<f64> = z.iter().map(|v| v.clamp(Z_CLAMP, 1.0 - Z_CLAMP)).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len();
    let nf = n as f64;
    let (mut dp, mut dm, mut w2, mut a2, mut zsum) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0, 0.0, 0.0);
    for (k, &zi) in z.iter().enumerate() {
        let i = (k + 1) as f64;
        dp = dp.max(i / nf - zi);
        dm = dm.max(zi - (i - 1.0) / nf);
        w2 += (zi - (2.0 * i - 1.0) / (2.0 * nf)).powi(2);
        a2 += (2.0 * i - 1.0) * (zi.ln() + (1.0 - z[n - 1 - k]).ln());
        zsum += zi;
    }
    w2 += 1.0 / (12.0 * nf);
    let zbar = zsum / nf;
    let u2 = w2 - nf * (zbar - 0.5).powi(2);
    let a2 = -a2 / nf - nf;
    let f = if scaled { nf.sqrt() } else { 1.0 };
    let (dp, dm) = (dp * f, dm * f);
    Ok(EdfStatistics { d_plus: dp, d_minus: dm, d: dp.max(dm), v: dp + dm, w2, u2, a2, scaled, n })
}

pub fn edf_statistics(sample: &[f64], null: &NullDistribution, scaled: bool) -> Result<EdfStatistics> {
    if sample.is_empty() {
        return Err(AcdError::Empty("no observations for EDF statistics".into()));
    }
    let z: Vec<f64> = sample.iter().map(|&x| null.cdf(x)).collect();
    edf_from_z(&z, scaled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapProtocol {
    /// Re-estimate the null on every replicate.
    ReEstimate,
    /// Evaluate replicates against the generating parameters.
    FixedParameters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueTable {
    pub family: NullFamily,
    /// Distribution the replicates were drawn from.
    pub generator: NullDistribution,
    pub protocol: BootstrapProtocol,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub scaled: bool,
    pub levels: Vec<f64>,
    /// Statistic name to critical values, one per level.
    pub values: BTreeMap<String, Vec<f64>>,
}

impl CriticalValueTable {
    pub fn critical(&self, stat: &str, level: f64) -> Option<f64> {
        let i = self.levels.iter().position(|l| (l - level).abs() < 1e-12)?;
        self.values.get(stat).map(|v| v[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub m: usize,
    pub seed: u64,
    pub protocol: BootstrapProtocol,
    pub scaled: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { m: 10_000, seed: 1, protocol: BootstrapProtocol::ReEstimate, scaled: true }
    }
}

/// Parametric-bootstrap critical values for samples of size `n` drawn from
/// `generator`. The `(1 - level)` quantile is the `round(M (1 - level))`-th
/// order statistic of the replicate values.
pub fn mc_critical_values(
    generator: &NullDistribution,
    n: usize,
    levels: &[f64],
    opts: &McOptions,
) -> Result<CriticalValueTable> {
    generator.validate()?;
    if n < 20 {
        return Err(AcdError::Parameter(format!("sample size {n} is below the minimum of 20")));
    }
    if opts.m < 1000 {
        return Err(AcdError::Parameter(format!("M = {} is below the minimum of 1000", opts.m)));
    }
    if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(AcdError::Parameter("levels must lie in (0, 1)".into()));
    }
    let family = generator.family();
    let reps: Vec<EdfStatistics> = (0..opts.m)
        .into_par_iter()
        .map(|r| {
            let mut rng = sub_rng(opts.seed, r as u64);
            for _ in 0..10 {
                let x: Vec<f64> = (0..n).map(|_| generator.sample(&mut rng)).collect();
                let null = match opts.protocol {
                    BootstrapProtocol::FixedParameters => *generator,
                    BootstrapProtocol::ReEstimate => match fit_null(&x, family) {
                        Ok(f) => f,
                        Err(_) => continue,
                    },
                };
                return edf_statistics(&x, &null, opts.scaled);
            }
            Err(AcdError::Convergence(format!("replicate {r} failed re-estimation 10 times")))
        })
        .collect::<Result<_>>()?;
    let mut values = BTreeMap::new();
    for name in STAT_NAMES {
        let mut s: Vec<f64> = reps.iter().map(|e| e.get(name).expect("known statistic")).collect();
        s.sort_by(f64::total_cmp);
        let cv = levels
            .iter()
            .map(|&l| {
                let k = ((opts.m as f64) * (1.0 - l)).round() as usize;
                s[k.clamp(1, opts.m) - 1]
            })
            .collect();
        values.insert(name.to_string(), cv);
    }
    Ok(CriticalValueTable {
        family,
        generator: *generator,
        protocol: opts.protocol,
        m: opts.m,
        n,
        seed: opts.seed,
        scaled: opts.scaled,
        levels: levels.to_vec(),
        values,
    })
}

/// Sample sizes sharing a cached table: exact below 100, otherwise rounded
/// to two significant digits.
pub fn n_bucket(n: usize) -> usize {
    if n < 100 {
        return n;
    }
    let mag = 10usize.pow((n as f64).log10().floor() as u32 - 1);
    ((n as f64 / mag as f64).round() as usize) * mag
}

/// Cache file name for a table with the given provenance.
pub fn cache_key(generator: &NullDistribution, n: usize, opts: &McOptions) -> String {
    let shape = match *generator {
        NullDistribution::Gamma { shape, .. } | NullDistribution::GeneralizedPareto { shape, .. } => {
            format!("-s{:.2}", shape)
        }
        _ => String::new(),
    };
    let proto = match opts.protocol {
        BootstrapProtocol::ReEstimate => "re",
        BootstrapProtocol::FixedParameters => "fixed",
    };
    format!(
        "cv-{}{}-n{}-m{}-seed{}-{}-{}.json",
        generator.family().name(),
        shape,
        n_bucket(n),
        opts.m,
        opts.seed,
        proto,
        if opts.scaled { "scaled" } else { "raw" }
    )
}

/// Outcome of a cache lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    /// A file existed but its provenance did not match; it was regenerated.
    Regenerated,
}

/// Loads a matching table from `dir` or generates (and stores) one.
pub fn cached_critical_values(
    dir: &Path,
    generator: &NullDistribution,
    n: usize,
    levels: &[f64],
    opts: &McOptions,
) -> Result<(CriticalValueTable, CacheStatus, PathBuf)> {
    let path = dir.join(cache_key(generator, n, opts));
    let bucket = n_bucket(n);
    let mut status = CacheStatus::Miss;
    if let Ok(text) = std::fs::read_to_string(&path) {
        match CriticalValueTable::from_json(&text) {
            Ok(t) if t.n == bucket
                && t.m == opts.m
                && t.seed == opts.seed
                && t.protocol == opts.protocol
                && t.scaled == opts.scaled
                && t.family == generator.family()
                && levels.iter().all(|l| t.levels.iter().any(|x| (x - l).abs() < 1e-12)) =>
            {
                return Ok((t, CacheStatus::Hit, path));
            }
            _ => status = CacheStatus::Regenerated,
        }
    }
    let table = mc_critical_values(generator, bucket, levels, opts)?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(&path, table.to_json()?)?;
    Ok((table, status, path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatDecision {
    pub name: String,
    pub value: f64,
    pub critical: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub family: NullFamily,
    pub fitted: NullDistribution,
    pub params: Vec<ParamEstimate>,
    pub loglik: f64,
    pub n: usize,
    pub level: f64,
    pub statistics: EdfStatistics,
    pub decisions: Vec<StatDecision>,
}

impl GofReport {
    pub fn rejects(&self, stat: &str) -> Option<bool> {
        self.decisions.iter().find(|d| d.name == stat).map(|d| d.reject)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Fits the null, computes the statistics and compares each with its
/// critical value (upper tail).
pub fn gof_test(sample: &[f64], family: NullFamily, table: &CriticalValueTable, level: f64) -> Result<GofReport> {
    if table.family != family {
        return Err(AcdError::State(format!(
            "critical values were generated for {} but the test is for {}",
            table.family.name(),
            family.name()
        )));
    }
    let fitted = fit_null(sample, family)?;
    let stats = edf_statistics(sample, &fitted, table.scaled)?;
    let mut decisions = Vec::new();
    for name in STAT_NAMES {
        let critical = table
            .critical(name, level)
            .ok_or_else(|| AcdError::Parameter(format!("level {level} is not in the critical-value table")))?;
        let value = stats.get(name).expect("known statistic");
        decisions.push(StatDecision { name: name.to_string(), value, critical, reject: value > critical });
    }
    let ses = fitted.std_errors(sample);
    Ok(GofReport {
        family,
        params: fitted
            .params()
            .into_iter()
            .zip(ses)
            .map(|((name, value), std_error)| ParamEstimate { name: name.to_string(), value, std_error })
            .collect(),
        loglik: fitted.log_likelihood(sample),
        fitted,
        n: sample.len(),
        level,
        statistics: stats,
        decisions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayVerdict {
    pub day_index: u32,
    pub n: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinDayShare {
    pub family: NullFamily,
    pub level: f64,
    /// Days where D, W² and A² all accept.
    pub n0: usize,
    pub n_days: usize,
    pub share: f64,
    pub days: Vec<DayVerdict>,
    /// Days with fewer than the minimum number of observations.
    pub skipped: Vec<u32>,
}

pub const WITHIN_DAY_MIN_OBS: usize = 20;

/// Day-by-day tests using D, W² and A² only. Each day gets critical values
/// simulated from its own fitted null.
pub fn within_day_share(
    series: &DurationSeries,
    family: NullFamily,
    level: f64,
    opts: &McOptions,
) -> Result<WithinDayShare> {
    let mut days = Vec::new();
    let mut skipped = Vec::new();
    for (i, d) in series.days.iter().enumerate() {
        let x: Vec<f64> = d.entries.iter().map(|e| e.duration).collect();
        if x.len() < WITHIN_DAY_MIN_OBS {
            skipped.push(d.day_index);
            continue;
        }
        let fitted = fit_null(&x, family)?;
        let day_opts = McOptions { seed: crate::rng::derive_seed(opts.seed, i as u64), ..*opts };
        let table = mc_critical_values(&fitted, x.len(), &[level], &day_opts)?;
        let report = gof_test(&x, family, &table, level)?;
        let passed = ["D", "W2", "A2"].iter().all(|s| report.rejects(s) == Some(false));
        days.push(DayVerdict { day_index: d.day_index, n: x.len(), passed });
    }
    if days.is_empty() {
        return Err(AcdError::Empty("no day has enough observations for testing".into()));
    }
    let n0 = days.iter().filter(|d| d.passed).count();
    Ok(WithinDayShare { family, level, n0, n_days: days.len(), share: n0 as f64 / days.len() as f64, days, skipped })
}
