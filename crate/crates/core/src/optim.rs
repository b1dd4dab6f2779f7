//! Quasi-Newton minimization (BFGS with backtracking line search).
//!
//! The objective returns `None` for infeasible points; the line search treats
//! those as rejected steps.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Relative change of the objective.
    pub f_rel_tol: f64,
    /// Largest absolute parameter change, relative to `max(1, |x|)`.
    pub x_tol: f64,
    /// Gradient max-norm below which the point is accepted outright.
    pub g_tol: f64,
    /// Small-change stopping additionally requires the gradient max-norm to
    /// be below this bound.
    pub g_accept: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 1000, f_rel_tol: 1e-8, x_tol: 1e-6, g_tol: 1e-9, g_accept: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    LineSearchFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub status: Status,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f`, which returns value and gradient. `None` from the
/// objective at `x0` yields `None`.
pub fn minimize<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> Option<BfgsResult>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let (mut fx, mut g) = f(x0).filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))?;
    let mut x = x0.to_vec();
    // inverse Hessian approximation, row-major
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if max_abs(&g) <= opts.g_tol {
            return Some(BfgsResult { x, f: fx, grad: g, iterations, status: Status::Converged });
        }
        iterations += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            h = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
        }
        if fresh {
            // keep the very first steepest-descent step modest
            let scale = 1.0 / max_abs(&d).max(1.0);
            if scale < 1.0 {
                d.iter_mut().for_each(|v| *v *= scale);
                slope *= scale;
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            if let Some((fnew, gnew)) = f(&xn) {
                if fnew.is_finite() && gnew.iter().all(|v| v.is_finite()) && fnew <= fx + 1e-4 * step * slope {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            if !fresh {
                h = identity(n);
                fresh = true;
                continue;
            }
            return Some(BfgsResult { x, f: fx, grad: g, iterations, status: Status::LineSearchFailure });
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let df = (fx - fnew).abs();
        let dx = s.iter().zip(&x).fold(0.0f64, |m, (si, xi)| m.max(si.abs() / xi.abs().max(1.0)));
        let f_scale = fx.abs().max(fnew.abs()).max(1.0);
        x = xn;
        fx = fnew;
        g = gnew;
        if df <= opts.f_rel_tol * f_scale && dx <= opts.x_tol && max_abs(&g) <= opts.g_accept {
            return Some(BfgsResult { x, f: fx, grad: g, iterations, status: Status::Converged });
        }

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let yy = dot(&y, &y);
                h = identity(n);
                h.iter_mut().for_each(|v| *v *= sy / yy);
                fresh = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
    }
    Some(BfgsResult { x, f: fx, grad: g, iterations, status: Status::MaxIter })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// `H <- (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
        }
    }
}
