//! Fisher scoring for the locally weighted Fay–Herriot likelihood, where
//! the marginal of `y_k` is `N(x_k′β, A + D_k)`.
//!
//! Each iteration takes the generalized least squares step for β at the
//! current `A`, then a scoring step for `A`:
//!
//! ```text
//! A ← A + [Σ w_k /(A+D_k)²]⁻¹ Σ w_k { r_k²/(A+D_k)² − 1/(A+D_k) }
//! ```
//!
//! floored at `A_min` and halved while it would lower the objective. A
//! final Newton refinement in `(β, log ν)` sharpens the limit point.

use nalgebra::{DMatrix, DVector};

use super::newton::{clamp_tau, free_grad_norm, maximize, NewtonSettings};
use super::objective::LocalProblem;
use super::{FitDiagnostics, FitOptions, LocalFit};
use crate::error::{Error, Result};
use crate::family::HyperParams;

const MAX_HALVINGS: usize = 40;

fn objective(prob: &LocalProblem<'_>, beta: &[f64], a: f64) -> f64 {
    prob.marginal(beta, 1.0 / a)
}

/// GLS solve of the weighted normal equations at variance `a`.
fn gls_beta(prob: &LocalProblem<'_>, a: f64) -> Result<Vec<f64>> {
    let p = prob.p();
    let prep = prob.prep;
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for (k, w) in prob.active() {
        let x = prep.row(k);
        let s = w / (a + 1.0 / prep.n[k]);
        for i in 0..p {
            xty[i] += s * x[i] * prep.y[k];
            for j in 0..=i {
                xtx[(i, j)] += s * x[i] * x[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            xtx[(j, i)] = xtx[(i, j)];
        }
    }
    let max_diag = (0..p).map(|i| xtx[(i, i)]).fold(0.0, f64::max);
    let chol = xtx
        .cholesky()
        .ok_or(Error::RankDeficient { area: prob.area })?;
    let l = chol.l();
    if (0..p).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * max_diag) {
        return Err(Error::RankDeficient { area: prob.area });
    }
    Ok(chol.solve(&xty).iter().copied().collect())
}

pub(crate) fn fit(prob: &LocalProblem<'_>, init: &HyperParams, opts: &FitOptions) -> Result<LocalFit> {
    prob.check_weight()?;
    let prep = prob.prep;
    let a_min = opts.a_min();
    let a_max = 1.0 / opts.nu_min;
    let mut a = (1.0 / init.nu).clamp(a_min, a_max);
    let mut beta = init.beta.clone();
    let mut value = objective(prob, &beta, a);

    let mut iterations = 0;
    let mut last_increment = f64::INFINITY;
    let mut converged = false;
    let mut trace = Vec::new();
    if opts.trace {
        trace.push(value);
    }
    while iterations < opts.max_iter {
        iterations += 1;
        let new_beta = gls_beta(prob, a)?;
        // The GLS step maximizes over β exactly for fixed A.
        let beta_value = objective(prob, &new_beta, a);
        let (beta_next, mut v) = if beta_value >= value {
            (new_beta, beta_value)
        } else {
            (beta.clone(), value)
        };

        let (mut score, mut info) = (0.0, 0.0);
        for (k, w) in prob.active() {
            let var = a + 1.0 / prep.n[k];
            let r = prep.y[k] - prob.eta(k, &beta_next);
            score += w * (r * r / (var * var) - 1.0 / var);
            info += w / (var * var);
        }
        let mut step = score / info;
        let mut a_next = a;
        for _ in 0..MAX_HALVINGS {
            let cand = (a + step).clamp(a_min, a_max);
            let cv = objective(prob, &beta_next, cand);
            if cv >= v {
                a_next = cand;
                v = cv;
                break;
            }
            step *= 0.5;
        }

        let moved = beta_next
            .iter()
            .zip(&beta)
            .map(|(x, y)| (x - y).abs())
            .fold((a_next - a).abs(), f64::max);
        last_increment = v - value;
        beta = beta_next;
        a = a_next;
        value = v;
        if opts.trace {
            trace.push(value);
        }
        if last_increment <= opts.rel_tol * value.abs().max(1.0) || moved < opts.param_tol {
            converged = true;
            break;
        }
    }

    let bounds = opts.tau_bounds();
    let mut polish_iterations = 0;
    let mut theta: Vec<f64> = beta.iter().copied().chain([-a.ln()]).collect();
    clamp_tau(&mut theta, bounds);
    if opts.polish {
        let settings = NewtonSettings {
            max_iter: opts.polish_max_iter,
            rel_tol: 1e-13,
            param_tol: opts.param_tol * 0.01,
            tau_bounds: bounds,
            max_step: opts.max_step,
        };
        let out = maximize(&theta, |t| prob.marginal_theta(t), |t| prob.marginal_eval(t), &settings);
        polish_iterations = out.iterations;
        if out.value >= value {
            last_increment = out.value - value;
            theta = out.theta;
            value = out.value;
        }
        converged = converged || out.converged;
    }
    let grad_norm = free_grad_norm(&theta, &prob.marginal_eval(&theta), bounds);
    let p = prob.p();
    let tau = theta[p];
    beta = theta[..p].to_vec();
    a = (-tau).exp();

    let params = HyperParams::new(beta, 1.0 / a).map_err(|e| Error::FitFailed {
        area: prob.area,
        reason: e.to_string(),
    })?;
    Ok(LocalFit {
        params,
        diagnostics: FitDiagnostics {
            iterations,
            inner_iterations: 0,
            polish_iterations,
            objective: value,
            last_increment,
            grad_norm,
            converged,
            at_nu_cap: tau >= bounds.1,
            at_nu_floor: tau <= bounds.0,
            trace,
        },
    })
}
