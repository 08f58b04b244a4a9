//! Damped Newton ascent over `θ = (β, log ν)` with a box on the last
//! coordinate.
//!
//! Steps solve `(−H + λI) d = g`, with `λ` raised until the shifted matrix
//! is positive definite, are capped in sup-norm and halved until the
//! objective does not decrease. When `log ν` sits on a bound and the
//! gradient points outward it is frozen and only β moves.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct Eval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonSettings {
    pub max_iter: usize,
    /// Stop once the Newton decrement falls below `rel_tol·max(1, |f|)`.
    pub rel_tol: f64,
    /// Stop once an accepted step moves no coordinate more than this.
    pub param_tol: f64,
    pub tau_bounds: (f64, f64),
    pub max_step: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub theta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_HALVINGS: usize = 40;

pub(crate) fn clamp_tau(theta: &mut [f64], bounds: (f64, f64)) {
    let last = theta.len() - 1;
    theta[last] = theta[last].clamp(bounds.0, bounds.1);
}

/// Solve `(−H + λI) d = g` restricted to the `free` leading coordinates.
fn damped_direction(eval: &Eval, free: usize) -> Option<DVector<f64>> {
    let neg_h = -eval.hess.view((0, 0), (free, free)).into_owned();
    let g = eval.grad.rows(0, free).into_owned();
    let scale = (0..free).map(|i| neg_h[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
    let mut lambda = 0.0;
    for _ in 0..30 {
        let mut m = neg_h.clone();
        for i in 0..free {
            m[(i, i)] += lambda;
        }
        if let Some(chol) = m.cholesky() {
            let d = chol.solve(&g);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        lambda = if lambda == 0.0 { 1e-10 * scale } else { lambda * 10.0 };
    }
    None
}

pub(crate) fn maximize<V, D>(
    theta0: &[f64],
    value_fn: V,
    deriv_fn: D,
    s: &NewtonSettings,
) -> NewtonOutcome
where
    V: Fn(&[f64]) -> f64,
    D: Fn(&[f64]) -> Eval,
{
    let dim = theta0.len();
    let mut theta = theta0.to_vec();
    clamp_tau(&mut theta, s.tau_bounds);
    let mut eval = deriv_fn(&theta);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < s.max_iter {
        iterations += 1;
        let tau = theta[dim - 1];
        let g_tau = eval.grad[dim - 1];
        let frozen = (tau >= s.tau_bounds.1 && g_tau > 0.0) || (tau <= s.tau_bounds.0 && g_tau < 0.0);
        let free = if frozen { dim - 1 } else { dim };
        if free == 0 {
            converged = true;
            break;
        }
        let Some(mut dir) = damped_direction(&eval, free) else {
            break;
        };
        let decrement: f64 = dir.dot(&eval.grad.rows(0, free));
        if decrement.abs() <= s.rel_tol * eval.value.abs().max(1.0) {
            converged = true;
            break;
        }
        let sup = dir.amax();
        if sup > s.max_step {
            dir *= s.max_step / sup;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut cand = theta.clone();
            for i in 0..free {
                cand[i] += t * dir[i];
            }
            clamp_tau(&mut cand, s.tau_bounds);
            let v = value_fn(&cand);
            if v.is_finite() && v >= eval.value {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(cand) = accepted else {
            // No ascent at machine precision: stationary for practical purposes.
            converged = true;
            break;
        };
        let moved = cand
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        theta = cand;
        eval = deriv_fn(&theta);
        if moved < s.param_tol {
            converged = true;
            break;
        }
    }

    NewtonOutcome {
        theta,
        value: eval.value,
        iterations,
        converged,
    }
}

/// Gradient sup-norm, ignoring an outward-pointing `log ν` component on a bound.
pub(crate) fn free_grad_norm(theta: &[f64], eval: &Eval, bounds: (f64, f64)) -> f64 {
    let dim = theta.len();
    let tau = theta[dim - 1];
    let g_tau = eval.grad[dim - 1];
    let mut norm = eval.grad.rows(0, dim - 1).amax();
    let outward = (tau >= bounds.1 && g_tau > 0.0) || (tau <= bounds.0 && g_tau < 0.0);
    if !outward {
        norm = norm.max(g_tau.abs());
    }
    norm
}
