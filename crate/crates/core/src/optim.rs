//! Small deterministic optimizers used by the fitting routines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Result of a bounded scalar minimization.
#[derive(Debug, Clone, Copy)]
pub struct ScalarMin {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Brent's method on `[lo, hi]` (golden-section steps with parabolic
/// interpolation). Deterministic: no random restarts.
pub fn brent_minimize<F>(mut f: F, lo: f64, hi: f64, xtol: f64, max_iter: usize) -> ScalarMin
where
    F: FnMut(f64) -> f64,
{
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for iter in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = xtol * x.abs() + 1e-300;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return ScalarMin { x, value: fx, iterations: iter, converged: true };
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    ScalarMin { x, value: fx, iterations: max_iter, converged: false }
}

/// Outcome of a Levenberg-Marquardt run.
#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// Sum of squared residuals after each accepted step (first entry is the
    /// initial guess).
    pub accepted_sse: Vec<f64>,
    /// Jacobian at the solution, rows = residuals.
    pub jacobian: DMatrix<f64>,
    pub sse: f64,
    pub iterations: usize,
}

impl LmReport {
    /// Parameter covariance `s^2 (J^T J)^-1` with `s^2 = SSE / (m - p)`.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let (m, p) = self.jacobian.shape();
        if m <= p {
            return None;
        }
        let jtj = self.jacobian.transpose() * &self.jacobian;
        let inv = jtj.try_inverse()?;
        Some(inv * (self.sse / (m - p) as f64))
    }
}

/// Levenberg-Marquardt for `min sum r_i(p)^2`.
///
/// `residuals(p, r, jac)` fills the residual vector and, when `jac` is
/// `Some`, the Jacobian `dr_i/dp_j`.
pub fn levenberg_marquardt<F>(
    mut residuals: F,
    initial: &[f64],
    n_residuals: usize,
    max_iter: usize,
) -> Result<LmReport>
where
    F: FnMut(&[f64], &mut [f64], Option<&mut DMatrix<f64>>),
{
    let p = initial.len();
    let mut params = initial.to_vec();
    let mut r = vec![0.0; n_residuals];
    let mut jac = DMatrix::zeros(n_residuals, p);
    residuals(&params, &mut r, Some(&mut jac));
    let mut sse: f64 = r.iter().map(|x| x * x).sum();
    if !sse.is_finite() {
        return Err(Error::NonConvergence("initial residual is not finite".into()));
    }
    let mut history = vec![sse];
    let mut lambda = 1e-3;
    let mut trial = vec![0.0; p];
    let mut r_trial = vec![0.0; n_residuals];

    for iter in 0..max_iter {
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * rv;
        if g.amax() <= 1e-15 * (1.0 + sse) {
            return Ok(LmReport { params, accepted_sse: history, jacobian: jac, sse, iterations: iter });
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..p {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            for i in 0..p {
                trial[i] = params[i] + step[i];
            }
            residuals(&trial, &mut r_trial, None);
            let sse_trial: f64 = r_trial.iter().map(|x| x * x).sum();
            if sse_trial.is_finite() && sse_trial < sse {
                let rel = (sse - sse_trial) / sse.max(1e-300);
                params.copy_from_slice(&trial);
                residuals(&params, &mut r, Some(&mut jac));
                sse = sse_trial;
                history.push(sse);
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                let step_small = step
                    .iter()
                    .zip(&params)
                    .all(|(s, x)| s.abs() <= 1e-12 * (x.abs() + 1e-12));
                if rel < 1e-15 || step_small || sse == 0.0 {
                    return Ok(LmReport { params, accepted_sse: history, jacobian: jac, sse, iterations: iter + 1 });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: we are at a (numerical) minimum
            return Ok(LmReport { params, accepted_sse: history, jacobian: jac, sse, iterations: iter + 1 });
        }
    }
    Err(Error::NonConvergence(format!(
        "Levenberg-Marquardt hit the {max_iter}-iteration limit (sse = {sse:e})"
    )))
}
