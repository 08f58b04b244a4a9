//! EM for the Poisson–gamma and binomial–beta local likelihoods.
//!
//! E-step: posterior expectations of the latent mean's sufficient
//! statistics at the current `(β, ν)`. M-step: Newton ascent on the
//! kernel-weighted complete-data prior log-likelihood over `(β, log ν)`.
//! The marginal objective never decreases across iterations. After EM
//! stops, optional Newton refinement runs on the marginal objective itself.

use super::newton::{clamp_tau, free_grad_norm, maximize, NewtonSettings};
use super::objective::{e_step, m_step_term, LocalProblem};
use super::{FitDiagnostics, FitOptions, LocalFit};
use crate::error::{Error, Result};
use crate::family::HyperParams;

const M_STEP_MAX_ITER: usize = 25;

pub(crate) fn fit(prob: &LocalProblem<'_>, init: &HyperParams, opts: &FitOptions) -> Result<LocalFit> {
    prob.check_weight()?;
    let family = prob.family();
    let prep = prob.prep;
    let p = prob.p();
    let bounds = opts.tau_bounds();

    let mut theta: Vec<f64> = init.beta.iter().copied().chain([init.nu.ln()]).collect();
    clamp_tau(&mut theta, bounds);
    let mut value = prob.marginal_theta(&theta);
    if !value.is_finite() {
        return Err(Error::FitFailed {
            area: prob.area,
            reason: "objective not finite at the starting value".into(),
        });
    }

    let m_settings = NewtonSettings {
        max_iter: M_STEP_MAX_ITER,
        rel_tol: 1e-10,
        param_tol: opts.param_tol * 0.1,
        tau_bounds: bounds,
        max_step: opts.max_step,
    };

    let mut iterations = 0;
    let mut inner = 0;
    let mut last_increment = f64::INFINITY;
    let mut converged = false;
    let mut trace = Vec::new();
    if opts.trace {
        trace.push(value);
    }
    while iterations < opts.max_iter {
        iterations += 1;
        let nu = theta[p].exp();
        let stats: Vec<_> = (0..prep.len())
            .map(|k| {
                let m = family.mean_link(prob.eta(k, &theta[..p]));
                e_step(family, prep.z[k], prep.n[k], nu, m)
            })
            .collect();
        let surrogate = |t: &[f64]| prob.assemble(t, |k, eta, tau| m_step_term(stats[k], eta, tau));
        let out = maximize(&theta, |t| surrogate(t).value, surrogate, &m_settings);
        inner += out.iterations;

        let new_value = prob.marginal_theta(&out.theta);
        if !new_value.is_finite() || new_value < value - 1e-9 * value.abs().max(1.0) {
            // Numerical noise in the surrogate; keep the last iterate.
            converged = true;
            break;
        }
        let moved = out
            .theta
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        last_increment = new_value - value;
        theta = out.theta;
        value = new_value;
        if opts.trace {
            trace.push(value);
        }
        // With refinement to follow, EM only needs to reach the basin.
        let tol = if opts.polish { opts.rel_tol.max(opts.handoff_tol) } else { opts.rel_tol };
        if last_increment <= tol * value.abs().max(1.0) || moved < opts.param_tol {
            converged = true;
            break;
        }
    }

    let mut polish_iterations = 0;
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
    let tau = theta[p];
    let params = HyperParams::new(theta[..p].to_vec(), tau.exp()).map_err(|e| Error::FitFailed {
        area: prob.area,
        reason: e.to_string(),
    })?;
    Ok(LocalFit {
        params,
        diagnostics: FitDiagnostics {
            iterations,
            inner_iterations: inner,
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
