//! Family-specific log-likelihood expressions written directly in terms of
//! `(w_i, ψ_i)`. The estimator uses the generic `ln p(w/ψ) - ln ψ` route;
//! these serve as an independent check.

use statrs::function::gamma::ln_gamma;

/// `-Σ [ln ψ_i + w_i/ψ_i]`
pub fn eacd(w: &[f64], psi: &[f64]) -> f64 {
    w.iter().zip(psi).map(|(&w, &p)| -(p.ln() + w / p)).sum()
}

/// Weibull with the unit-mean scale `1/Γ(1+1/k)` folded in:
/// `Σ [ln(k/w) + k ln(g w/ψ) - (g w/ψ)^k]`, `g = Γ(1+1/k)`.
pub fn wacd(w: &[f64], psi: &[f64], k: f64) -> f64 {
    let lg = ln_gamma(1.0 + 1.0 / k);
    w.iter()
        .zip(psi)
        .map(|(&w, &p)| {
            let ly = lg + w.ln() - p.ln();
            (k / w).ln() + k * ly - (k * ly).exp()
        })
        .sum()
}

/// Generalized gamma with `y = w Γ((d+1)/m) / (ψ Γ(d/m))`:
/// `Σ [ln m - ln w - ln Γ(d/m) + d ln y - y^m]`.
pub fn ggacd(w: &[f64], psi: &[f64], d: f64, m: f64) -> f64 {
    let lr = ln_gamma((d + 1.0) / m) - ln_gamma(d / m);
    let lgu = ln_gamma(d / m);
    w.iter()
        .zip(psi)
        .map(|(&w, &p)| {
            let ly = lr + w.ln() - p.ln();
            m.ln() - w.ln() - lgu + d * ly - (m * ly).exp()
        })
        .sum()
}
