use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::spec::{AcdSpec, MeanForm};
use crate::error::{AcdError, Result};

fn require_linear(spec: &AcdSpec, what: &str) -> Result<()> {
    if spec.mean_form != MeanForm::Linear {
        return Err(AcdError::Unsupported(format!("{what} is only defined for the linear form")));
    }
    Ok(())
}

fn require_11(spec: &AcdSpec, what: &str) -> Result<(f64, f64)> {
    require_linear(spec, what)?;
    if spec.orders() != (1, 1) {
        return Err(AcdError::Unsupported(format!("{what} is only available for ACD(1,1)")));
    }
    Ok((spec.alpha[0], spec.beta[0]))
}

/// `ω / (1 - Σα - Σβ)`.
pub fn unconditional_mean(spec: &AcdSpec) -> Result<f64> {
    require_linear(spec, "unconditional mean")?;
    let s = spec.persistence();
    if s >= 1.0 {
        return Err(AcdError::NonStationary(format!("persistence {s} >= 1")));
    }
    Ok(spec.omega / (1.0 - s))
}

/// Unconditional variance of an ACD(1,1) given `E[ε²]`.
pub fn unconditional_variance(spec: &AcdSpec, second_moment_eps: f64) -> Result<f64> {
    let (a, b) = require_11(spec, "unconditional variance")?;
    let mu = unconditional_mean(spec)?;
    let e2 = second_moment_eps;
    let c = 1.0 - b * b - 2.0 * a * b;
    let denom = c - a * a * e2;
    if denom <= 0.0 {
        return Err(AcdError::InfiniteVariance(format!(
            "beta^2 + 2 alpha beta + alpha^2 E[eps^2] = {} >= 1",
            1.0 - denom
        )));
    }
    Ok(mu * mu * (e2 * (c - a * a) - denom) / denom)
}

/// First-order autocorrelation of an ACD(1,1).
pub fn acf1(spec: &AcdSpec) -> Result<f64> {
    let (a, b) = require_11(spec, "first-order autocorrelation")?;
    if a + b >= 1.0 {
        return Err(AcdError::NonStationary(format!("persistence {} >= 1", a + b)));
    }
    Ok(a * (1.0 - b * b - a * b) / (1.0 - b * b - 2.0 * a * b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaRepresentation {
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// Roots of `1 - α(L) - β(L)` outside the unit circle.
    pub stationary: bool,
    /// Roots of `1 - β(L)` outside the unit circle.
    pub invertible: bool,
}

/// Roots of `1 - Σ c_j z^j` all outside the unit circle, checked through the
/// companion-matrix eigenvalues lying strictly inside it.
fn roots_outside_unit_circle(c: &[f64]) -> bool {
    let p = c.len();
    if p == 0 || c.iter().all(|&v| v == 0.0) {
        return true;
    }
    let mut comp = DMatrix::<f64>::zeros(p, p);
    for (j, &v) in c.iter().enumerate() {
        comp[(0, j)] = v;
    }
    for i in 1..p {
        comp[(i, i - 1)] = 1.0;
    }
    comp.complex_eigenvalues().iter().all(|z| z.norm() < 1.0)
}

/// ARMA(max(m,q), q) coefficients of the linear form written for `w_i`.
pub fn arma_coefficients(spec: &AcdSpec) -> Result<ArmaRepresentation> {
    require_linear(spec, "ARMA representation")?;
    let (m, q) = spec.orders();
    let p = m.max(q);
    let ar: Vec<f64> = (0..p)
        .map(|j| spec.alpha.get(j).copied().unwrap_or(0.0) + spec.beta.get(j).copied().unwrap_or(0.0))
        .collect();
    let ma: Vec<f64> = spec.beta.iter().map(|b| -b).collect();
    Ok(ArmaRepresentation {
        stationary: roots_outside_unit_circle(&ar),
        invertible: roots_outside_unit_circle(&spec.beta),
        ar,
        ma,
    })
}

/// Conditional intensity `h(τ/ψ)/ψ` at `elapsed = τ` since the last event.
pub fn conditional_intensity(spec: &AcdSpec, elapsed: f64, psi_next: f64) -> Result<f64> {
    if !(elapsed >= 0.0) {
        return Err(AcdError::Domain(format!("elapsed time must be non-negative, got {elapsed}")));
    }
    if !(psi_next > 0.0 && psi_next.is_finite()) {
        return Err(AcdError::Domain(format!("conditional mean must be positive, got {psi_next}")));
    }
    Ok(spec.innovation.hazard(elapsed / psi_next)? / psi_next)
}
