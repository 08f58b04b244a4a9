//! Bandwidth selection by leave-one-out cross validation.
//!
//! `CV(b) = Σ_i (y_i − ψ′(x_i′β̂₍₋ᵢ₎(u_i)))²`, where `β̂₍₋ᵢ₎(u_i)` is the
//! local fit anchored at area `i` with its own term removed, is minimized
//! by golden-section search on `[b_ℓ, b_u]`.
//!
//! The default upper end is `2·max‖u_i − u_k‖²`, a squared distance used as
//! a bound on a distance. It is kept as is and can be overridden.

use serde::{Deserialize, Serialize};

use crate::data::{max_pairwise_distance, AreaRecord, Prepared};
use crate::error::{Error, Result};
use crate::family::{dot, Family, HyperParams};
use crate::local_fit::{fit_constant_prepared, fit_prepared_at, FitOptions};
use crate::par_map;

/// Golden ratio conjugate `(√5 − 1)/2`.
pub const RHO: f64 = 0.618_033_988_749_894_8;

pub const DEFAULT_LO: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSearch {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl BandwidthSearch {
    pub fn new(lo: f64, hi: f64, tol: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::invalid(format!("search interval [{lo}, {hi}] is not valid")));
        }
        if !(tol > 0.0) {
            return Err(Error::invalid(format!("tolerance {tol} must be positive")));
        }
        Ok(Self { lo, hi, tol })
    }

    /// `[0.01, 2·max d²]` with tolerance `tol_factor·hi`.
    pub fn for_data(data: &[AreaRecord], tol_factor: f64) -> Result<Self> {
        let d = max_pairwise_distance(data);
        let hi = 2.0 * d * d;
        if !(hi > DEFAULT_LO) {
            return Err(Error::invalid(format!(
                "default upper bandwidth {hi} does not exceed {DEFAULT_LO}; set the interval explicitly"
            )));
        }
        Self::new(DEFAULT_LO, hi, tol_factor * hi)
    }

    pub fn default_for(data: &[AreaRecord]) -> Result<Self> {
        Self::for_data(data, 1e-3)
    }

    /// Evaluation budget of [`golden_section`] for this interval.
    pub fn max_evaluations(&self) -> usize {
        golden_eval_bound(self.lo, self.hi, self.tol)
    }
}

/// `⌈log((hi − lo)/tol)/log(1/ρ)⌉ + 2`.
pub fn golden_eval_bound(lo: f64, hi: f64, tol: f64) -> usize {
    let ratio = (hi - lo) / tol;
    let k = if ratio <= 1.0 { 0.0 } else { (ratio.ln() / (1.0 / RHO).ln()).ceil() };
    k as usize + 2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub b: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenResult {
    pub minimizer: f64,
    pub value: f64,
    /// Every evaluation in call order.
    pub log: Vec<Evaluation>,
    /// Final bracket.
    pub bracket: (f64, f64),
}

/// Golden-section minimization of `f` on `[lo, hi]`.
///
/// Stops once the bracket is no wider than `tol` and returns the better
/// interior point, so for unimodal `f` the error is at most `tol`. For
/// other `f` the result is a local minimizer. Ties move the bracket right.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> GoldenResult {
    let mut log = Vec::new();
    let mut eval = |b: f64, log: &mut Vec<Evaluation>| {
        let value = f(b);
        log.push(Evaluation { b, value });
        value
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - RHO * (b - a);
    let mut d = a + RHO * (b - a);
    let mut fc = eval(c, &mut log);
    let mut fd = eval(d, &mut log);
    while b - a > tol {
        if fc < fd {
            b = d;
            if b - a <= tol {
                break;
            }
            d = c;
            fd = fc;
            c = b - RHO * (b - a);
            fc = eval(c, &mut log);
        } else {
            a = c;
            if b - a <= tol {
                break;
            }
            c = d;
            fc = fd;
            d = a + RHO * (b - a);
            fd = eval(d, &mut log);
        }
    }
    let (minimizer, value) = if fc < fd { (c, fc) } else { (d, fd) };
    GoldenResult {
        minimizer,
        value,
        log,
        bracket: (a, b),
    }
}

/// Leave-one-out machinery for one dataset, reused across bandwidths.
///
/// Every leave-one-out fit starts from the global fit of the full data.
#[derive(Debug, Clone)]
pub struct CvContext {
    prep: Prepared,
    global: Option<HyperParams>,
    opts: FitOptions,
}

impl CvContext {
    pub fn new(family: Family, data: &[AreaRecord]) -> Result<Self> {
        Self::with_options(family, data, FitOptions::default())
    }

    pub fn with_options(family: Family, data: &[AreaRecord], opts: FitOptions) -> Result<Self> {
        let prep = Prepared::new(family, data)?;
        let global = fit_constant_prepared(&prep, &opts).ok().map(|f| f.params);
        Ok(Self { prep, global, opts })
    }

    /// Shared start of the leave-one-out fits.
    pub fn global(&self) -> Option<&HyperParams> {
        self.global.as_ref()
    }

    /// Leave-one-out predictions `ψ′(x_i′β̂₍₋ᵢ₎(u_i))` for every sampled area.
    pub fn loo_predictions(&self, b: f64) -> Vec<Result<f64>> {
        let prep = &self.prep;
        par_map(prep.len(), |k| {
            let fit = fit_prepared_at(prep, prep.u[k], Some(k), b, prep.idx[k], self.global.as_ref(), &self.opts)?;
            Ok(prep.family.mean_link(dot(prep.row(k), &fit.params.beta)))
        })
    }

    pub fn criterion(&self, b: f64) -> Result<f64> {
        if !(b > 0.0) {
            return Err(Error::invalid(format!("bandwidth {b} must be positive")));
        }
        let preds = self.loo_predictions(b);
        let mut total = 0.0;
        for (k, pred) in preds.into_iter().enumerate() {
            let r = self.prep.y[k] - pred?;
            total += r * r;
        }
        Ok(total)
    }
}

/// Cross-validation criterion at bandwidth `b`.
pub fn cv_criterion(family: Family, data: &[AreaRecord], b: f64) -> Result<f64> {
    CvContext::new(family, data)?.criterion(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub bandwidth: f64,
    pub cv: f64,
    pub search: BandwidthSearch,
    /// `(b, CV(b))` in evaluation order; failed points carry `+∞`.
    pub log: Vec<Evaluation>,
    /// Bandwidths at which some leave-one-out fit failed.
    pub failed: Vec<f64>,
}

/// Minimize the CV criterion over the search interval.
pub fn select_bandwidth(family: Family, data: &[AreaRecord], search: &BandwidthSearch) -> Result<BandwidthSelection> {
    select_bandwidth_with(&CvContext::new(family, data)?, search)
}

pub fn select_bandwidth_with(ctx: &CvContext, search: &BandwidthSearch) -> Result<BandwidthSelection> {
    let mut failed = Vec::new();
    let res = golden_section(
        |b| match ctx.criterion(b) {
            Ok(v) => v,
            Err(_) => {
                failed.push(b);
                f64::INFINITY
            }
        },
        search.lo,
        search.hi,
        search.tol,
    );
    if !res.value.is_finite() {
        return Err(Error::FitFailed {
            area: 0,
            reason: "cross validation failed at every evaluated bandwidth".into(),
        });
    }
    Ok(BandwidthSelection {
        bandwidth: res.minimizer,
        cv: res.value,
        search: *search,
        log: res.log,
        failed,
    })
}

/// CV curve on a grid, for plotting. Failed points are `+∞`.
pub fn cv_curve(ctx: &CvContext, grid: &[f64]) -> Vec<Evaluation> {
    grid.iter()
        .map(|&b| Evaluation {
            b,
            value: ctx.criterion(b).unwrap_or(f64::INFINITY),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let r = golden_section(|b| (b - 3.0) * (b - 3.0), 0.01, 10.0, 1e-6);
        assert!((r.minimizer - 3.0).abs() <= 1e-6);
        assert!(r.log.len() <= golden_eval_bound(0.01, 10.0, 1e-6));
    }

    #[test]
    fn kink_minimum() {
        let e = std::f64::consts::E;
        let r = golden_section(|b| (b - e).abs(), 0.01, 10.0, 1e-8);
        assert!((r.minimizer - e).abs() <= 1e-8);
    }

    #[test]
    fn full_tolerance_stops_after_bracketing() {
        let r = golden_section(|b| b, 1.0, 2.0, 1.0);
        assert_eq!(r.log.len(), 2);
    }

    #[test]
    fn constant_terminates_inside() {
        let r = golden_section(|_| 1.0, 0.5, 4.0, 1e-3);
        assert!(r.log.iter().all(|e| (0.5..=4.0).contains(&e.b)));
        assert!((0.5..=4.0).contains(&r.minimizer));
    }

    #[test]
    fn bracket_shrinks_by_rho() {
        let r = golden_section(|b| (b - 1.3).powi(2), 0.0, 5.0, 1e-4);
        let width = r.bracket.1 - r.bracket.0;
        let iters = r.log.len() - 1;
        assert!((width - 5.0 * RHO.powi(iters as i32)).abs() < 1e-9);
    }
}
