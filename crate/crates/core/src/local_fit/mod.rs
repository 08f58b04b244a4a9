//! Kernel-weighted local likelihood fits of the hyperparameters.
//!
//! At an anchor location `u` the objective is
//!
//! ```text
//! ℓ(φ; u) = Σ_k w(‖u − u_k‖) {C(ν, m_k) − C(n_k + ν, μ̃_k)},   w(d) = exp(−d²/(2b²))
//! ```
//!
//! summed over sampled areas. The Gaussian family is fitted by Fisher
//! scoring, the count families by EM. Both finish with Newton refinement.

mod em;
mod gaussian;
pub(crate) mod newton;
pub(crate) mod objective;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{distance, AreaRecord, Prepared};
use crate::error::{Error, Result};
use crate::family::{dot, Family, HyperParams};
use crate::par_map;
use objective::LocalProblem;

/// Gaussian kernel bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: f64,
}

impl KernelConfig {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::invalid(format!("bandwidth {bandwidth} must be positive")));
        }
        Ok(Self { bandwidth })
    }

    /// Flat kernel: every weight is one.
    pub fn flat() -> Self {
        Self {
            bandwidth: f64::INFINITY,
        }
    }
}

pub fn kernel_weight(d: f64, cfg: &KernelConfig) -> f64 {
    kernel_weight_raw(d, cfg.bandwidth)
}

pub(crate) fn kernel_weight_raw(d: f64, b: f64) -> f64 {
    if b.is_infinite() {
        return 1.0;
    }
    let t = d / b;
    (-0.5 * t * t).exp()
}

/// Iteration controls shared by all fitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop when the objective gain falls below `rel_tol·max(1, |ℓ|)`.
    pub rel_tol: f64,
    /// Stop when no parameter moves more than this.
    pub param_tol: f64,
    pub max_iter: usize,
    pub nu_min: f64,
    pub nu_max: f64,
    /// Newton refinement on the marginal objective after the main loop.
    pub polish: bool,
    pub polish_max_iter: usize,
    /// Relative objective gain at which EM hands over to the refinement.
    pub handoff_tol: f64,
    /// Sup-norm cap on a single Newton step in `(β, log ν)`.
    pub max_step: f64,
    /// Record the objective after every outer iteration.
    pub trace: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            param_tol: 1e-7,
            max_iter: 500,
            nu_min: 1e-8,
            nu_max: 1e8,
            polish: true,
            polish_max_iter: 100,
            handoff_tol: 1e-4,
            max_step: 4.0,
            trace: false,
        }
    }
}

impl FitOptions {
    /// Floor on the Gaussian random-effect variance `A = 1/ν`.
    pub fn a_min(&self) -> f64 {
        1.0 / self.nu_max
    }

    pub(crate) fn tau_bounds(&self) -> (f64, f64) {
        (self.nu_min.ln(), self.nu_max.ln())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Outer (scoring or EM) iterations.
    pub iterations: usize,
    /// Newton iterations spent inside M-steps.
    pub inner_iterations: usize,
    pub polish_iterations: usize,
    /// Local objective at the returned parameters.
    pub objective: f64,
    pub last_increment: f64,
    /// Sup-norm of the free gradient in `(β, log ν)`.
    pub grad_norm: f64,
    pub converged: bool,
    /// ν reached its upper cap (no local overdispersion).
    pub at_nu_cap: bool,
    pub at_nu_floor: bool,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub params: HyperParams,
    pub diagnostics: FitDiagnostics,
}

/// Spatially varying fit: one local fit per sampled area.
#[derive(Debug, Clone, PartialEq)]
pub struct SvFit {
    pub family: Family,
    pub bandwidth: f64,
    /// Record index of each fitted (sampled) area.
    pub areas: Vec<usize>,
    pub fits: Vec<Result<LocalFit>>,
}

impl SvFit {
    /// Fit for record `i`, if it is sampled and its fit succeeded.
    pub fn get(&self, record: usize) -> Option<&LocalFit> {
        let k = self.areas.binary_search(&record).ok()?;
        self.fits[k].as_ref().ok()
    }

    pub fn params(&self, record: usize) -> Option<&HyperParams> {
        self.get(record).map(|f| &f.params)
    }

    pub fn failures(&self) -> usize {
        self.fits.iter().filter(|f| f.is_err()).count()
    }

    /// Every local fit, or the first failure.
    pub fn all_params(&self) -> Result<Vec<HyperParams>> {
        self.fits
            .iter()
            .map(|f| f.as_ref().map(|f| f.params.clone()).map_err(Clone::clone))
            .collect()
    }
}

fn sampled_position(prep: &Prepared, record: usize) -> Result<usize> {
    prep.position(record)
        .ok_or_else(|| Error::invalid(format!("area {record} is not a sampled area")))
}

fn anchor_of(data: &[AreaRecord], record: usize) -> Result<[f64; 2]> {
    data.get(record)
        .map(|r| r.u)
        .ok_or_else(|| Error::invalid(format!("area index {record} out of range")))
}

/// Local objective at area `i` with parameters `phi`.
pub fn local_loglik(
    family: Family,
    phi: &HyperParams,
    i: usize,
    data: &[AreaRecord],
    cfg: &KernelConfig,
) -> Result<f64> {
    let prep = Prepared::new(family, data)?;
    sampled_position(&prep, i)?;
    if phi.beta.len() != prep.p {
        return Err(Error::invalid("coefficient length does not match covariates"));
    }
    if !(phi.nu > 0.0 && phi.nu.is_finite()) {
        return Err(Error::invalid("prior precision must be positive"));
    }
    let prob = LocalProblem::anchored(&prep, data[i].u, None, cfg.bandwidth, i);
    Ok(prob.marginal(&phi.beta, phi.nu))
}

pub(crate) fn fit_problem(prob: &LocalProblem<'_>, init: &HyperParams, opts: &FitOptions) -> Result<LocalFit> {
    if init.beta.len() != prob.p() {
        return Err(Error::invalid("initial coefficient length does not match covariates"));
    }
    match prob.family() {
        Family::Gaussian => gaussian::fit(prob, init, opts),
        Family::PoissonGamma | Family::BinomialBeta => em::fit(prob, init, opts),
    }
}

/// Starting value from weighted moments: β by weighted least squares on
/// the link scale, ν matching the excess of the observed spread over the
/// sampling variance.
pub(crate) fn moment_init(prob: &LocalProblem<'_>, opts: &FitOptions) -> Result<HyperParams> {
    let family = prob.family();
    let prep = prob.prep;
    let p = prob.p();
    let total = prob.total_weight();
    if !(total > 0.0) {
        return Err(Error::InsufficientWeight {
            area: prob.area,
            total,
            required: (p + 1) as f64,
        });
    }
    let smoothed = |k: usize| match family {
        Family::Gaussian => prep.y[k],
        Family::PoissonGamma => (prep.z[k] + 0.5) / (prep.n[k] + 0.5),
        Family::BinomialBeta => (prep.z[k] + 0.5) / (prep.n[k] + 1.0),
    };

    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for (k, w) in prob.active() {
        let x = prep.row(k);
        let t = family.link(smoothed(k));
        for a in 0..p {
            xty[a] += w * x[a] * t;
            for b in 0..p {
                xtx[(a, b)] += w * x[a] * x[b];
            }
        }
    }
    let ridge = 1e-8 * (0..p).map(|a| xtx[(a, a)]).fold(0.0, f64::max).max(1e-300);
    for a in 0..p {
        xtx[(a, a)] += ridge;
    }
    let beta: Vec<f64> = match xtx.cholesky() {
        Some(ch) => ch.solve(&xty).iter().copied().collect(),
        None => vec![0.0; p],
    };
    let beta: Vec<f64> = beta.into_iter().map(|b| if b.is_finite() { b.clamp(-30.0, 30.0) } else { 0.0 }).collect();

    // Spread of y about the fitted means versus expected sampling noise.
    let (mut spread, mut noise, mut qbar) = (0.0, 0.0, 0.0);
    let (mut ybar, mut yvar) = (0.0, 0.0);
    for (k, w) in prob.active() {
        ybar += w * prep.y[k];
    }
    ybar /= total;
    for (k, w) in prob.active() {
        let m = family.mean_link(dot(prep.row(k), &beta));
        let q = family.variance_fn(m).unwrap_or(0.0);
        spread += w * (prep.y[k] - m).powi(2);
        noise += w * q / prep.n[k];
        qbar += w * q;
        yvar += w * (prep.y[k] - ybar).powi(2);
    }
    spread /= total;
    noise /= total;
    qbar /= total;
    yvar /= total;
    let var = (spread - noise).max(0.05 * yvar).max(1e-8);
    let nu = match family {
        Family::Gaussian => 1.0 / var,
        _ => qbar / var + family.v2(),
    };
    let lo = opts.nu_min.max(1e-2);
    let hi = opts.nu_max.min(1e6);
    let nu = if nu.is_finite() { nu.clamp(lo, hi) } else { hi };
    HyperParams::new(beta, nu)
}

/// Fit anchored at an arbitrary location, optionally dropping one sampled
/// record from the sum. Without `init` the start is the weighted moment
/// estimate of the same objective.
pub fn fit_at(
    family: Family,
    data: &[AreaRecord],
    anchor: [f64; 2],
    exclude: Option<usize>,
    cfg: &KernelConfig,
    init: Option<&HyperParams>,
    opts: &FitOptions,
) -> Result<LocalFit> {
    let prep = Prepared::new(family, data)?;
    let area = exclude.unwrap_or(0);
    let excl = match exclude {
        Some(j) => prep.position(j),
        None => None,
    };
    fit_prepared_at(&prep, anchor, excl, cfg.bandwidth, area, init, opts)
}

pub(crate) fn fit_prepared_at(
    prep: &Prepared,
    anchor: [f64; 2],
    exclude: Option<usize>,
    bandwidth: f64,
    area: usize,
    init: Option<&HyperParams>,
    opts: &FitOptions,
) -> Result<LocalFit> {
    let prob = LocalProblem::anchored(prep, anchor, exclude, bandwidth, area);
    prob.check_weight()?;
    let start = match init {
        Some(phi) => phi.clone(),
        None => moment_init(&prob, opts)?,
    };
    fit_problem(&prob, &start, opts)
}

/// Local fit at sampled record `i` from a given start.
pub fn fit_local(
    family: Family,
    i: usize,
    data: &[AreaRecord],
    cfg: &KernelConfig,
    init: &HyperParams,
    opts: &FitOptions,
) -> Result<LocalFit> {
    let prep = Prepared::new(family, data)?;
    sampled_position(&prep, i)?;
    fit_prepared_at(&prep, data[i].u, None, cfg.bandwidth, i, Some(init), opts)
}

/// Fisher-scoring fit for the Gaussian family.
pub fn fit_local_gaussian(
    i: usize,
    data: &[AreaRecord],
    cfg: &KernelConfig,
    init: &HyperParams,
) -> Result<LocalFit> {
    fit_local(Family::Gaussian, i, data, cfg, init, &FitOptions::default())
}

/// EM fit for the Poisson–gamma family.
pub fn fit_local_pg(i: usize, data: &[AreaRecord], cfg: &KernelConfig, init: &HyperParams) -> Result<LocalFit> {
    fit_local(Family::PoissonGamma, i, data, cfg, init, &FitOptions::default())
}

/// EM fit for the binomial–beta family.
pub fn fit_local_bb(i: usize, data: &[AreaRecord], cfg: &KernelConfig, init: &HyperParams) -> Result<LocalFit> {
    fit_local(Family::BinomialBeta, i, data, cfg, init, &FitOptions::default())
}

/// Global maximum likelihood fit over all sampled areas.
pub fn fit_constant(family: Family, data: &[AreaRecord]) -> Result<LocalFit> {
    fit_constant_with(family, data, &FitOptions::default())
}

pub fn fit_constant_with(family: Family, data: &[AreaRecord], opts: &FitOptions) -> Result<LocalFit> {
    let prep = Prepared::new(family, data)?;
    fit_constant_prepared(&prep, opts)
}

pub(crate) fn fit_constant_prepared(prep: &Prepared, opts: &FitOptions) -> Result<LocalFit> {
    let prob = LocalProblem::uniform(prep);
    prob.check_weight()?;
    let init = moment_init(&prob, opts)?;
    fit_problem(&prob, &init, opts)
}

/// One local fit per sampled area, each warm-started from the global fit.
pub fn fit_all(family: Family, data: &[AreaRecord], cfg: &KernelConfig) -> Result<SvFit> {
    fit_all_with(family, data, cfg, &FitOptions::default())
}

pub fn fit_all_with(family: Family, data: &[AreaRecord], cfg: &KernelConfig, opts: &FitOptions) -> Result<SvFit> {
    let prep = Prepared::new(family, data)?;
    fit_all_prepared(&prep, cfg.bandwidth, None, opts)
}

pub(crate) fn fit_all_prepared(
    prep: &Prepared,
    bandwidth: f64,
    global: Option<&HyperParams>,
    opts: &FitOptions,
) -> Result<SvFit> {
    let owned;
    let global = match global {
        Some(g) => Some(g),
        None => {
            owned = fit_constant_prepared(prep, opts).ok().map(|f| f.params);
            owned.as_ref()
        }
    };
    let fits = par_map(prep.len(), |k| {
        fit_prepared_at(prep, prep.u[k], None, bandwidth, prep.idx[k], global, opts)
    });
    let failed = fits.iter().filter(|f| f.is_err()).count();
    if failed == fits.len() {
        return Err(Error::AllAreasFailed(failed));
    }
    Ok(SvFit {
        family: prep.family,
        bandwidth,
        areas: prep.idx.clone(),
        fits,
    })
}

/// Fit anchored at record `j` with `j`'s own term removed.
pub fn fit_local_loo(family: Family, j: usize, data: &[AreaRecord], cfg: &KernelConfig) -> Result<LocalFit> {
    fit_local_loo_with(family, j, data, cfg, None, &FitOptions::default())
}

pub fn fit_local_loo_with(
    family: Family,
    j: usize,
    data: &[AreaRecord],
    cfg: &KernelConfig,
    init: Option<&HyperParams>,
    opts: &FitOptions,
) -> Result<LocalFit> {
    let anchor = anchor_of(data, j)?;
    fit_at(family, data, anchor, Some(j), cfg, init, opts)
}

/// Euclidean distances from `anchor` to every sampled area.
pub fn anchor_distances(data: &[AreaRecord], anchor: [f64; 2]) -> Vec<f64> {
    data.iter().filter(|r| r.sampled).map(|r| distance(anchor, r.u)).collect()
}
