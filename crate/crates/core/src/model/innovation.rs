//! Unit-mean innovation families.
//!
//! Every family is a member of the generalized gamma family
//! `p(x) = m x^(d-1) / (a^d Γ(d/m)) exp(-(x/a)^m)` with the scale pinned to
//! `a = Γ(d/m) / Γ((d+1)/m)` so that `E[ε] = 1`:
//!
//! | family      | d | m |
//! |-------------|---|---|
//! | Exponential | 1 | 1 |
//! | Weibull(k)  | k | k |
//! | Gamma(d)    | d | 1 |

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma as GammaDist};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, gamma_lr, gamma_ur, ln_gamma};

use crate::error::{AcdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InnovationFamily {
    Exponential,
    Weibull { k: f64 },
    Gamma { d: f64 },
    GeneralizedGamma { d: f64, m: f64 },
}

impl InnovationFamily {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let valid = match *self {
            Self::Exponential => true,
            Self::Weibull { k } => ok(k),
            Self::Gamma { d } => ok(d),
            Self::GeneralizedGamma { d, m } => ok(d) && ok(m),
        };
        if valid {
            Ok(())
        } else {
            Err(AcdError::Parameter(format!("shape parameters of {self:?} must be positive")))
        }
    }

    /// `(d, m)` of the generalized gamma member.
    pub fn gg_params(&self) -> (f64, f64) {
        match *self {
            Self::Exponential => (1.0, 1.0),
            Self::Weibull { k } => (k, k),
            Self::Gamma { d } => (d, 1.0),
            Self::GeneralizedGamma { d, m } => (d, m),
        }
    }

    /// Scale `a` that pins the mean to one.
    pub fn scale(&self) -> f64 {
        let (d, m) = self.gg_params();
        (ln_gamma(d / m) - ln_gamma((d + 1.0) / m)).exp()
    }

    pub fn shapes(&self) -> Vec<f64> {
        match *self {
            Self::Exponential => vec![],
            Self::Weibull { k } => vec![k],
            Self::Gamma { d } => vec![d],
            Self::GeneralizedGamma { d, m } => vec![d, m],
        }
    }

    pub fn shape_names(&self) -> &'static [&'static str] {
        match self {
            Self::Exponential => &[],
            Self::Weibull { .. } => &["k"],
            Self::Gamma { .. } => &["d"],
            Self::GeneralizedGamma { .. } => &["d", "m"],
        }
    }

    pub fn n_shapes(&self) -> usize {
        self.shapes().len()
    }

    /// Same family with new shape values (in [`shapes`](Self::shapes) order).
    pub fn with_shapes(&self, s: &[f64]) -> Self {
        match self {
            Self::Exponential => Self::Exponential,
            Self::Weibull { .. } => Self::Weibull { k: s[0] },
            Self::Gamma { .. } => Self::Gamma { d: s[0] },
            Self::GeneralizedGamma { .. } => Self::GeneralizedGamma { d: s[0], m: s[1] },
        }
    }

    /// Short label used in model names: E, W, G, GG.
    pub fn label(&self) -> &'static str {
        match self {
            Self::Exponential => "E",
            Self::Weibull { .. } => "W",
            Self::Gamma { .. } => "G",
            Self::GeneralizedGamma { .. } => "GG",
        }
    }

    pub fn kernel(&self) -> Kernel {
        Kernel::new(self)
    }

    fn check_x(x: f64) -> Result<()> {
        if x.is_finite() && x > 0.0 {
            Ok(())
        } else {
            Err(AcdError::Domain(format!("innovation density needs x > 0, got {x}")))
        }
    }

    pub fn log_density(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        Ok(self.kernel().log_density(x.ln(), x))
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        self.log_density(x).map(f64::exp)
    }

    /// `P(ε <= x)`; zero for `x <= 0`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential => -(-x).exp_m1(),
            Self::Weibull { .. } => -(-(x / self.scale()).powf(self.gg_params().1)).exp_m1(),
            _ => {
                let (d, m) = self.gg_params();
                gamma_lr(d / m, (x / self.scale()).powf(m))
            }
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match *self {
            Self::Exponential => (-x).exp(),
            Self::Weibull { .. } => (-(x / self.scale()).powf(self.gg_params().1)).exp(),
            _ => {
                let (d, m) = self.gg_params();
                gamma_ur(d / m, (x / self.scale()).powf(m))
            }
        }
    }

    /// `p(x) / S(x)`. At `x = 0` the limit is returned (possibly infinite).
    pub fn hazard(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(AcdError::Domain(format!("hazard needs x >= 0, got {x}")));
        }
        let (d, m) = self.gg_params();
        if x == 0.0 {
            return Ok(if d > 1.0 {
                0.0
            } else if d < 1.0 {
                f64::INFINITY
            } else {
                (m.ln() - self.scale().ln() - ln_gamma(1.0 / m)).exp()
            });
        }
        match *self {
            Self::Exponential => Ok(1.0),
            Self::Weibull { k } => Ok(k / self.scale() * (x / self.scale()).powf(k - 1.0)),
            _ => {
                let s = self.survival(x);
                let ln_s = if s > 1e-300 {
                    s.ln()
                } else {
                    // leading term of the upper incomplete gamma function
                    let z = (x / self.scale()).powf(m);
                    (d / m - 1.0) * z.ln() - z - ln_gamma(d / m)
                };
                Ok((self.log_density(x)? - ln_s).exp())
            }
        }
    }

    /// `E[ε^2]`.
    pub fn second_moment(&self) -> f64 {
        let (d, m) = self.gg_params();
        let a = self.scale();
        a * a * (ln_gamma((d + 2.0) / m) - ln_gamma(d / m)).exp()
    }

    /// `E[ln ε]`.
    pub fn mean_log(&self) -> f64 {
        let (d, m) = self.gg_params();
        self.scale().ln() + digamma(d / m) / m
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential => Exp1.sample(rng),
            Self::Weibull { k } => {
                let e: f64 = Exp1.sample(rng);
                self.scale() * e.powf(1.0 / k)
            }
            _ => {
                let (d, m) = self.gg_params();
                let g = GammaDist::new(d / m, 1.0).expect("validated shape").sample(rng);
                if m == 1.0 {
                    self.scale() * g
                } else {
                    self.scale() * g.powf(1.0 / m)
                }
            }
        }
    }
}

/// Precomputed constants for fast repeated evaluation of `ln p(x)` and its
/// derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Kernel {
    kind: KernelKind,
    d: f64,
    m: f64,
    ln_a: f64,
    inv_a: f64,
    constant: f64,
    // derivative constants
    dig_u: f64,
    dln_a_dd: f64,
    dln_a_dm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum KernelKind {
    Exponential,
    Weibull,
    Gamma,
    General,
}

/// Value and derivatives of `ln p(x)` at one point.
#[derive(Debug, Clone, Copy)]
pub struct KernelEval {
    pub log_p: f64,
    /// `x * d ln p / dx`
    pub x_dlogp_dx: f64,
    /// Derivatives with respect to the family's natural shape parameters.
    pub dshape: [f64; 2],
}

impl Kernel {
    pub fn new(family: &InnovationFamily) -> Self {
        let (d, m) = family.gg_params();
        let u = d / m;
        let v = (d + 1.0) / m;
        let ln_a = ln_gamma(u) - ln_gamma(v);
        let kind = match family {
            InnovationFamily::Exponential => KernelKind::Exponential,
            InnovationFamily::Weibull { .. } => KernelKind::Weibull,
            InnovationFamily::Gamma { .. } => KernelKind::Gamma,
            InnovationFamily::GeneralizedGamma { .. } => KernelKind::General,
        };
        let (dig_u, dig_v) = if kind == KernelKind::Exponential { (0.0, 0.0) } else { (digamma(u), digamma(v)) };
        Self {
            kind,
            d,
            m,
            ln_a,
            inv_a: (-ln_a).exp(),
            constant: m.ln() - d * ln_a - ln_gamma(u),
            dig_u,
            dln_a_dd: (dig_u - dig_v) / m,
            dln_a_dm: (-u * dig_u + v * dig_v) / m,
        }
    }

    /// `ln p(x)` given `ln x` and `x`.
    #[inline]
    pub fn log_density(&self, ln_x: f64, x: f64) -> f64 {
        match self.kind {
            KernelKind::Exponential => -x,
            KernelKind::Gamma => self.constant + (self.d - 1.0) * ln_x - x * self.inv_a,
            _ => self.constant + (self.d - 1.0) * ln_x - (self.m * (ln_x - self.ln_a)).exp(),
        }
    }

    #[inline]
    pub fn eval(&self, ln_x: f64, x: f64) -> KernelEval {
        match self.kind {
            KernelKind::Exponential => KernelEval { log_p: -x, x_dlogp_dx: -x, dshape: [0.0; 2] },
            KernelKind::Gamma => {
                let z = x * self.inv_a;
                let d = self.d;
                // ln p = d ln d - lnΓ(d) + (d-1) ln x - d x
                let dd = d.ln() + 1.0 - self.dig_u + ln_x - x;
                KernelEval {
                    log_p: self.constant + (d - 1.0) * ln_x - z,
                    x_dlogp_dx: d - 1.0 - z,
                    dshape: [dd, 0.0],
                }
            }
            _ => {
                let (d, m) = (self.d, self.m);
                let lz = ln_x - self.ln_a;
                let z = (m * lz).exp();
                let dd = -self.ln_a - d * self.dln_a_dd - self.dig_u / m + ln_x + z * m * self.dln_a_dd;
                let dm = 1.0 / m - d * self.dln_a_dm + (d / m) * self.dig_u / m - z * lz + z * m * self.dln_a_dm;
                let dshape = if self.kind == KernelKind::Weibull { [dd + dm, 0.0] } else { [dd, dm] };
                KernelEval { log_p: self.constant + (d - 1.0) * ln_x - z, x_dlogp_dx: d - 1.0 - m * z, dshape }
            }
        }
    }
}
