//! The locally weighted marginal log-likelihood and the per-area term
//! derivatives used by the fitters.
//!
//! Terms are written in `(η, τ) = (x′β, log ν)`; the chain rule through
//! `η = x′β` is applied in [`LocalProblem::assemble`].

use nalgebra::{DMatrix, DVector};

use super::newton::Eval;
use super::kernel_weight_raw;
use crate::data::{distance, Prepared};
use crate::error::{Error, Result};
use crate::family::{dot, logistic, Family};
use crate::special::{
    digamma, digamma_increment, ln_beta, ln_gamma, ln_gamma_increment, trigamma,
    trigamma_increment,
};

/// Value and `(η, τ)` derivatives of one area's contribution.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct TermDerivs {
    pub v: f64,
    pub ge: f64,
    pub gt: f64,
    pub hee: f64,
    pub het: f64,
    pub htt: f64,
}

/// Kernel-weighted objective anchored at one location.
#[derive(Debug, Clone)]
pub(crate) struct LocalProblem<'a> {
    pub prep: &'a Prepared,
    /// Weight of each sampled area; zero for an excluded area.
    pub w: Vec<f64>,
    /// Record index of the anchor area, for diagnostics.
    pub area: usize,
}

impl<'a> LocalProblem<'a> {
    pub fn anchored(
        prep: &'a Prepared,
        anchor: [f64; 2],
        exclude: Option<usize>,
        bandwidth: f64,
        area: usize,
    ) -> Self {
        let w = prep
            .u
            .iter()
            .enumerate()
            .map(|(k, &u)| {
                if Some(k) == exclude {
                    0.0
                } else {
                    kernel_weight_raw(distance(anchor, u), bandwidth)
                }
            })
            .collect();
        Self { prep, w, area }
    }

    pub fn uniform(prep: &'a Prepared) -> Self {
        Self {
            prep,
            w: vec![1.0; prep.len()],
            area: 0,
        }
    }

    pub fn family(&self) -> Family {
        self.prep.family
    }

    pub fn p(&self) -> usize {
        self.prep.p
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Local fits need an effective sample of at least `p + 1` areas.
    pub fn check_weight(&self) -> Result<()> {
        let total = self.total_weight();
        let required = (self.p() + 1) as f64;
        if total < required {
            return Err(Error::InsufficientWeight {
                area: self.area,
                total,
                required,
            });
        }
        Ok(())
    }

    pub fn active(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.w.iter().copied().enumerate().filter(|&(_, w)| w > 0.0)
    }

    pub fn eta(&self, k: usize, beta: &[f64]) -> f64 {
        dot(self.prep.row(k), beta)
    }

    /// `Σ_k w_k {C(ν, m_k) − C(n_k + ν, μ̃_k)}`.
    pub fn marginal(&self, beta: &[f64], nu: f64) -> f64 {
        let f = self.family();
        let mut acc = 0.0;
        for (k, w) in self.active() {
            let m = f.mean_link(self.eta(k, beta));
            acc += w * f.marginal_kernel(self.prep.y[k], self.prep.n[k], nu, m);
        }
        acc
    }

    pub fn marginal_theta(&self, theta: &[f64]) -> f64 {
        let p = self.p();
        self.marginal(&theta[..p], theta[p].exp())
    }

    /// Weighted sums of term values and derivatives, chained through `η = x′β`.
    pub fn assemble<F>(&self, theta: &[f64], term: F) -> Eval
    where
        F: Fn(usize, f64, f64) -> TermDerivs,
    {
        let p = self.p();
        let tau = theta[p];
        let mut value = 0.0;
        let mut grad = DVector::zeros(p + 1);
        let mut hess = DMatrix::zeros(p + 1, p + 1);
        for (k, w) in self.active() {
            let x = self.prep.row(k);
            let t = term(k, dot(x, &theta[..p]), tau);
            value += w * t.v;
            for a in 0..p {
                grad[a] += w * t.ge * x[a];
                for b in 0..=a {
                    hess[(a, b)] += w * t.hee * x[a] * x[b];
                }
                hess[(p, a)] += w * t.het * x[a];
            }
            grad[p] += w * t.gt;
            hess[(p, p)] += w * t.htt;
        }
        for a in 0..=p {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        Eval { value, grad, hess }
    }

    /// Exact derivatives of the local marginal objective.
    pub fn marginal_eval(&self, theta: &[f64]) -> Eval {
        let prep = self.prep;
        match self.family() {
            Family::Gaussian => {
                self.assemble(theta, |k, eta, tau| ga_marginal(prep.y[k], prep.n[k], eta, tau))
            }
            Family::PoissonGamma => {
                self.assemble(theta, |k, eta, tau| pg_marginal(prep.z[k], prep.n[k], eta, tau))
            }
            Family::BinomialBeta => {
                self.assemble(theta, |k, eta, tau| bb_marginal(prep.z[k], prep.n[k], eta, tau))
            }
        }
    }
}

/// Gaussian marginal term `½log(s/n) − ½s(y − η)² + ½ny²` with
/// `s = 1/(1/ν + 1/n)`.
pub(crate) fn ga_marginal(y: f64, n: f64, eta: f64, tau: f64) -> TermDerivs {
    let nu = tau.exp();
    let s = n * nu / (n + nu);
    let q = n / (n + nu);
    let ds = s * q;
    let d2s = ds * (1.0 - 2.0 * s / n);
    let r = y - eta;
    let u = 1.0 / s - r * r;
    TermDerivs {
        v: 0.5 * (nu / (n + nu)).ln() - 0.5 * s * r * r + 0.5 * n * y * y,
        ge: s * r,
        gt: 0.5 * ds * u,
        hee: -s,
        het: ds * r,
        htt: 0.5 * d2s * u - 0.5 * ds * ds / (s * s),
    }
}

/// Poisson–gamma marginal term `−a·log(1 + n/ν) − z·log(n + ν) + log Γ(z+a)/Γ(a)`
/// with `a = ν·exp(η)`.
pub(crate) fn pg_marginal(z: f64, n: f64, eta: f64, tau: f64) -> TermDerivs {
    let nu = tau.exp();
    let a = (eta + tau).exp();
    let v = -a * (n / nu).ln_1p() - z * (n + nu).ln() + ln_gamma_increment(a, z);
    let r = n / (n + nu);
    let q = nu / (n + nu);
    let h = -(n / nu).ln_1p() + digamma_increment(a, z);
    let ha = trigamma_increment(a, z);
    let ah = a * h;
    let a2ha = a * a * ha;
    TermDerivs {
        v,
        ge: ah,
        gt: ah + a * r - z * q,
        hee: ah + a2ha,
        het: ah + a * r + a2ha,
        htt: ah + 2.0 * a * r + a2ha - (a + z) * r * q,
    }
}

/// Binomial–beta marginal term `log B(a+z, b+n−z) − log B(a, b)` with
/// `a = ν·m`, `b = ν·(1−m)`, `m = logistic(η)`.
pub(crate) fn bb_marginal(z: f64, n: f64, eta: f64, tau: f64) -> TermDerivs {
    let nu = tau.exp();
    let m = logistic(eta);
    let s = m * (1.0 - m);
    let (a, b) = (nu * m, nu * (1.0 - m));
    let v = ln_gamma_increment(a, z) + ln_gamma_increment(b, n - z) - ln_gamma_increment(nu, n);
    let da = digamma_increment(a, z);
    let db = digamma_increment(b, n - z);
    let dn = digamma_increment(nu, n);
    let ta = trigamma_increment(a, z);
    let tb = trigamma_increment(b, n - z);
    let tn = trigamma_increment(nu, n);
    let nus = nu * s;
    TermDerivs {
        v,
        ge: nus * (da - db),
        gt: a * da + b * db - nu * dn,
        hee: nus * (1.0 - 2.0 * m) * (da - db) + nus * nus * (ta + tb),
        het: nus * (da - db) + nus * (a * ta - b * tb),
        htt: a * da + a * a * ta + b * db + b * b * tb - nu * dn - nu * nu * tn,
    }
}

/// Expected sufficient statistics of the conjugate posterior of one area.
#[derive(Debug, Clone, Copy)]
pub(crate) enum EStats {
    /// `E[log μ]`, `E[μ]` under Gamma(z + νm, n + ν).
    Gamma { e_log: f64, e_mean: f64 },
    /// `E[log μ]`, `E[log(1 − μ)]` under Beta(z + νm, n − z + ν(1 − m)).
    Beta { e_log: f64, e_log1m: f64 },
}

pub(crate) fn e_step(family: Family, z: f64, n: f64, nu: f64, m: f64) -> EStats {
    match family {
        Family::PoissonGamma => {
            let shape = z + nu * m;
            let rate = n + nu;
            EStats::Gamma {
                e_log: digamma(shape) - rate.ln(),
                e_mean: shape / rate,
            }
        }
        Family::BinomialBeta => {
            let total = digamma(n + nu);
            EStats::Beta {
                e_log: digamma(z + nu * m) - total,
                e_log1m: digamma(n - z + nu * (1.0 - m)) - total,
            }
        }
        Family::Gaussian => unreachable!("gaussian fits do not use EM"),
    }
}

/// One area's term of the EM surrogate: the complete-data prior
/// log-likelihood with the latent sufficient statistics replaced by their
/// posterior expectations.
pub(crate) fn m_step_term(stats: EStats, eta: f64, tau: f64) -> TermDerivs {
    let nu = tau.exp();
    match stats {
        EStats::Gamma { e_log, e_mean } => {
            let a = (eta + tau).exp();
            let h = tau - digamma(a) + e_log;
            let ah = a * h;
            let a2t = a * a * trigamma(a);
            TermDerivs {
                v: a * tau - ln_gamma(a) + a * e_log - nu * e_mean,
                ge: ah,
                gt: ah + a - nu * e_mean,
                hee: ah - a2t,
                het: ah + a - a2t,
                htt: ah + 2.0 * a - a2t - nu * e_mean,
            }
        }
        EStats::Beta { e_log, e_log1m } => {
            let m = logistic(eta);
            let s = m * (1.0 - m);
            let (a, b) = (nu * m, nu * (1.0 - m));
            let ga = e_log - digamma(a);
            let gb = e_log1m - digamma(b);
            let (ta, tb) = (trigamma(a), trigamma(b));
            let nus = nu * s;
            TermDerivs {
                v: a * e_log + b * e_log1m - ln_beta(a, b),
                ge: nus * (ga - gb),
                gt: a * ga + b * gb + nu * digamma(nu),
                hee: nus * (1.0 - 2.0 * m) * (ga - gb) - nus * nus * (ta + tb),
                het: nus * (ga - gb) + nus * (b * tb - a * ta),
                htt: a * ga + b * gb - a * a * ta - b * b * tb
                    + nu * digamma(nu)
                    + nu * nu * trigamma(nu),
            }
        }
    }
}
