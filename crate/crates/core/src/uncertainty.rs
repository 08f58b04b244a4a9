//! Parametric bootstrap uncertainty: naive and hybrid MSE, benchmarking
//! with its excess MSE, and prediction for non-sampled areas.
//!
//! Replicate `s` draws from its own stream derived from `(seed, s)`, so
//! results do not depend on scheduling. Sums over replicates run in
//! replicate order with compensated summation.

use serde::{Deserialize, Serialize};

use crate::bandwidth::{select_bandwidth_with, BandwidthSearch, CvContext};
use crate::data::{AreaRecord, Prepared};
use crate::error::{Error, Result};
use crate::family::{bayes_estimate, Family, HyperParams};
use crate::local_fit::{fit_all_prepared, fit_constant_prepared, fit_prepared_at, FitOptions, KernelConfig, SvFit};
use crate::par_map;
use crate::rng::Stream;

/// Largest tolerated share of failed bootstrap replicates.
pub const MAX_FAILURE_RATE: f64 = 0.1;

const HYBRID_STREAM: u64 = 0;
const NONSAMPLED_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Re-select the bandwidth by CV inside every replicate.
    pub refit_bandwidth: bool,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            replicates,
            seed,
            refit_bandwidth: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::invalid("at least two bootstrap replicates are required"));
        }
        Ok(())
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Sum {
    sum: f64,
    comp: f64,
}

impl Sum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Naive MSE: the leading term `R1` at the plug-in local fit, per sampled area.
pub fn naive_mse(fit: &SvFit, data: &[AreaRecord]) -> Result<Vec<f64>> {
    fit.areas
        .iter()
        .map(|&i| {
            let phi = fit
                .params(i)
                .ok_or_else(|| Error::FitFailed {
                    area: i,
                    reason: "no local fit for this area".into(),
                })?;
            fit.family.r1(data[i].n, phi, &data[i].x)
        })
        .collect()
}

/// Benchmarked estimates `μ̂_i + ω_i Σ_k c_k (y_k − μ̂_k)` with
/// `ω_i = c_i / Σ c_k²`. The weights must be nonnegative and sum to one.
pub fn benchmark_estimates(mu_hat: &[f64], y: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    validate_weights(c, mu_hat.len())?;
    if y.len() != mu_hat.len() {
        return Err(Error::invalid("estimate and direct estimate lengths differ"));
    }
    Ok(benchmark_unchecked(mu_hat, y, c))
}

fn benchmark_unchecked(mu_hat: &[f64], y: &[f64], c: &[f64]) -> Vec<f64> {
    let mut gap = Sum::default();
    let mut c2 = Sum::default();
    for ((&m, &yk), &ck) in mu_hat.iter().zip(y).zip(c) {
        gap.add(ck * (yk - m));
        c2.add(ck * ck);
    }
    let (gap, c2) = (gap.value(), c2.value());
    mu_hat.iter().zip(c).map(|(&m, &ck)| m + ck / c2 * gap).collect()
}

pub fn validate_weights(c: &[f64], len: usize) -> Result<()> {
    if c.len() != len {
        return Err(Error::invalid(format!("{} benchmark weights for {len} areas", c.len())));
    }
    if c.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("benchmark weights must be finite and nonnegative"));
    }
    let mut s = Sum::default();
    c.iter().for_each(|&v| s.add(v));
    if (s.value() - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!("benchmark weights sum to {}, not 1", s.value())));
    }
    Ok(())
}

/// Default benchmark weights `c_i = n_i / Σ n_k` over sampled areas.
pub fn default_weights(data: &[AreaRecord]) -> Vec<f64> {
    let total: f64 = data.iter().filter(|r| r.sampled).map(|r| r.n).sum();
    data.iter().filter(|r| r.sampled).map(|r| r.n / total).collect()
}

/// Per-area results for the sampled areas, in record order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaEstimate {
    pub record: usize,
    pub estimate: f64,
    pub naive_mse: f64,
    /// Reported hybrid MSE, `max(raw, R2 term)`.
    pub hybrid_mse: f64,
    pub hybrid_raw: f64,
    pub truncated: bool,
    /// Bootstrap mean of `R1(φ̂ˢ)`.
    pub r1_boot: f64,
    /// Bootstrap mean of `(μ̃(yˢ, φ̂ˢ) − μ̃(yˢ, φ̂))²`.
    pub r2: f64,
    pub benchmarked: Option<f64>,
    pub excess_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub family: Family,
    pub bandwidth: f64,
    pub replicates: usize,
    pub seed: u64,
    pub failed_replicates: usize,
    pub areas: Vec<AreaEstimate>,
}

/// What a refit returns for one bootstrap replicate: local parameters for
/// every sampled area, in record order.
pub type Refit<'a> = dyn Fn(&[AreaRecord]) -> Result<Vec<HyperParams>> + Sync + 'a;

/// The standard refit: `fit_all` at the fitted bandwidth, or with the
/// bandwidth re-selected when requested.
pub fn standard_refit<'a>(
    family: Family,
    bandwidth: f64,
    search: Option<BandwidthSearch>,
    opts: FitOptions,
) -> impl Fn(&[AreaRecord]) -> Result<Vec<HyperParams>> + Sync + 'a {
    move |data: &[AreaRecord]| {
        let b = match search {
            Some(s) => select_bandwidth_with(&CvContext::with_options(family, data, opts)?, &s)?.bandwidth,
            None => bandwidth,
        };
        let prep = Prepared::new(family, data)?;
        fit_all_prepared(&prep, b, None, &opts)?.all_params()
    }
}

struct Replicate {
    r1: Vec<f64>,
    /// `μ̃(yˢ, φ̂ˢ)`.
    mu_boot: Vec<f64>,
    /// `μ̃(yˢ, φ̂)`.
    mu_plug: Vec<f64>,
    y: Vec<f64>,
}

fn fitted_params(fit: &SvFit) -> Result<Vec<HyperParams>> {
    fit.all_params()
}

/// Hybrid MSE with the standard refit, sharing the replicates with the
/// excess MSE of the benchmarked estimates when weights are given.
pub fn hybrid_mse(
    fit: &SvFit,
    data: &[AreaRecord],
    c: Option<&[f64]>,
    cfg: &BootstrapConfig,
) -> Result<EstimateReport> {
    let search = if cfg.refit_bandwidth {
        Some(BandwidthSearch::default_for(data)?)
    } else {
        None
    };
    let refit = standard_refit(fit.family, fit.bandwidth, search, FitOptions::default());
    hybrid_mse_with(fit, data, c, cfg, &refit)
}

pub fn hybrid_mse_with(
    fit: &SvFit,
    data: &[AreaRecord],
    c: Option<&[f64]>,
    cfg: &BootstrapConfig,
    refit: &Refit<'_>,
) -> Result<EstimateReport> {
    cfg.validate()?;
    let family = fit.family;
    let phi = fitted_params(fit)?;
    let areas = &fit.areas;
    if let Some(c) = c {
        validate_weights(c, areas.len())?;
    }
    let means: Vec<f64> = areas
        .iter()
        .zip(&phi)
        .map(|(&i, p)| p.prior_mean(family, &data[i].x))
        .collect::<Result<_>>()?;

    let reps: Vec<Result<Replicate>> = par_map(cfg.replicates, |s| {
        let mut rng = Stream::derive(cfg.seed, &[HYBRID_STREAM, s as u64]);
        let mut boot = data.to_vec();
        for (k, &i) in areas.iter().enumerate() {
            boot[i].y = family.sample_at(phi[k].nu, means[k], data[i].n, &mut rng).1;
        }
        let phi_s = refit(&boot)?;
        if phi_s.len() != areas.len() {
            return Err(Error::invalid("refit returned the wrong number of areas"));
        }
        let mut rep = Replicate {
            r1: Vec::with_capacity(areas.len()),
            mu_boot: Vec::with_capacity(areas.len()),
            mu_plug: Vec::with_capacity(areas.len()),
            y: Vec::with_capacity(areas.len()),
        };
        for (k, &i) in areas.iter().enumerate() {
            let (n, x, y) = (data[i].n, &data[i].x, boot[i].y);
            rep.r1.push(family.r1(n, &phi_s[k], x)?);
            rep.mu_boot.push(phi_s[k].bayes_estimate(family, y, n, x)?);
            rep.mu_plug.push(bayes_estimate(y, n, phi[k].nu, means[k])?);
            rep.y.push(y);
        }
        Ok(rep)
    });

    let failed = reps.iter().filter(|r| r.is_err()).count();
    if failed as f64 > MAX_FAILURE_RATE * cfg.replicates as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: cfg.replicates,
        });
    }
    let ok: Vec<&Replicate> = reps.iter().filter_map(|r| r.as_ref().ok()).collect();
    let used = ok.len() as f64;

    let m = areas.len();
    let mut r1_gap = vec![Sum::default(); m];
    let mut r1_sum = vec![Sum::default(); m];
    let mut r2_sum = vec![Sum::default(); m];
    let mut ex1 = vec![Sum::default(); m];
    let mut ex2 = vec![Sum::default(); m];
    let r1_hat: Vec<f64> = areas
        .iter()
        .zip(&phi)
        .map(|(&i, p)| family.r1(data[i].n, p, &data[i].x))
        .collect::<Result<_>>()?;
    for rep in &ok {
        let bench = c.map(|c| benchmark_unchecked(&rep.mu_boot, &rep.y, c));
        for k in 0..m {
            r1_gap[k].add(r1_hat[k] - rep.r1[k]);
            r1_sum[k].add(rep.r1[k]);
            let d = rep.mu_boot[k] - rep.mu_plug[k];
            r2_sum[k].add(d * d);
            if let Some(b) = &bench {
                let e = b[k] - rep.mu_boot[k];
                ex1[k].add(e * e);
                ex2[k].add(e * d);
            }
        }
    }

    let estimates: Vec<f64> = areas
        .iter()
        .zip(&phi)
        .map(|(&i, p)| p.bayes_estimate(family, data[i].y, data[i].n, &data[i].x))
        .collect::<Result<_>>()?;
    let y_obs: Vec<f64> = areas.iter().map(|&i| data[i].y).collect();
    let bench_obs = c.map(|c| benchmark_unchecked(&estimates, &y_obs, c));

    let rows = (0..m)
        .map(|k| {
            let r2 = r2_sum[k].value() / used;
            // 2R1(φ̂) − mean R1(φ̂ˢ) written as R1(φ̂) + mean(R1(φ̂) − R1(φ̂ˢ)).
            let raw = r1_hat[k] + r1_gap[k].value() / used + r2;
            AreaEstimate {
                record: areas[k],
                estimate: estimates[k],
                naive_mse: r1_hat[k],
                hybrid_mse: raw.max(r2),
                hybrid_raw: raw,
                truncated: raw < r2,
                r1_boot: r1_sum[k].value() / used,
                r2,
                benchmarked: bench_obs.as_ref().map(|b| b[k]),
                excess_mse: c.map(|_| ex1[k].value() / used + 2.0 * ex2[k].value() / used),
            }
        })
        .collect();

    Ok(EstimateReport {
        family,
        bandwidth: fit.bandwidth,
        replicates: cfg.replicates,
        seed: cfg.seed,
        failed_replicates: failed,
        areas: rows,
    })
}

/// Excess MSE of the benchmarked estimates, per sampled area.
pub fn excess_mse(fit: &SvFit, data: &[AreaRecord], c: &[f64], cfg: &BootstrapConfig) -> Result<Vec<f64>> {
    let report = hybrid_mse(fit, data, Some(c), cfg)?;
    Ok(report.areas.iter().map(|a| a.excess_mse.unwrap_or(0.0)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub record: usize,
    /// `m̂_j = ψ′(x_j′β̂₍₋ⱼ₎(u_j))`.
    pub mean: f64,
    pub params: HyperParams,
}

/// Prediction for record `j` from the local fit anchored at `u_j` with
/// `j`'s own term (if any) removed, started from the global fit.
pub fn predict_nonsampled(family: Family, j: usize, data: &[AreaRecord], cfg: &KernelConfig) -> Result<Prediction> {
    let opts = FitOptions::default();
    let prep = Prepared::new(family, data)?;
    let global = fit_constant_prepared(&prep, &opts).ok().map(|f| f.params);
    predict_prepared(&prep, data, j, cfg.bandwidth, global.as_ref(), &opts)
}

fn predict_prepared(
    prep: &Prepared,
    data: &[AreaRecord],
    j: usize,
    bandwidth: f64,
    init: Option<&HyperParams>,
    opts: &FitOptions,
) -> Result<Prediction> {
    let rec = data
        .get(j)
        .ok_or_else(|| Error::invalid(format!("area index {j} out of range")))?;
    let fit = fit_prepared_at(prep, rec.u, prep.position(j), bandwidth, j, init, opts)?;
    Ok(Prediction {
        record: j,
        mean: fit.params.prior_mean(prep.family, &rec.x)?,
        params: fit.params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonsampledMse {
    pub prediction: Prediction,
    /// `Q(m̂)/(ν̂ − v2)` at the plug-in fit.
    pub prior_variance: f64,
    /// Bootstrap mean of `(m̂ˢ − m̂)²`.
    pub estimation: f64,
    /// Bootstrap mean of `2(m̂ˢ − m̂)(m̂ − μˢ)`.
    pub cross: f64,
    pub raw: f64,
    pub mse: f64,
    pub truncated: bool,
    pub failed_replicates: usize,
}

/// Re-prediction for the records in `targets` on replicate data.
pub type Repredict<'a> = dyn Fn(&[AreaRecord], &[usize]) -> Result<Vec<f64>> + Sync + 'a;

pub fn nonsampled_mse(
    family: Family,
    j: usize,
    data: &[AreaRecord],
    fit: &SvFit,
    cfg: &BootstrapConfig,
) -> Result<NonsampledMse> {
    Ok(nonsampled_mse_many(family, &[j], data, fit, cfg)?.remove(0))
}

/// Non-sampled MSEs for several areas sharing one set of bootstrap worlds.
pub fn nonsampled_mse_many(
    family: Family,
    targets: &[usize],
    data: &[AreaRecord],
    fit: &SvFit,
    cfg: &BootstrapConfig,
) -> Result<Vec<NonsampledMse>> {
    let opts = FitOptions::default();
    let bandwidth = fit.bandwidth;
    let repredict = move |d: &[AreaRecord], js: &[usize]| -> Result<Vec<f64>> {
        let prep = Prepared::new(family, d)?;
        let global = fit_constant_prepared(&prep, &opts).ok().map(|f| f.params);
        js.iter()
            .map(|&j| Ok(predict_prepared(&prep, d, j, bandwidth, global.as_ref(), &opts)?.mean))
            .collect()
    };
    nonsampled_mse_with(family, targets, data, fit, cfg, &repredict)
}

pub fn nonsampled_mse_with(
    family: Family,
    targets: &[usize],
    data: &[AreaRecord],
    fit: &SvFit,
    cfg: &BootstrapConfig,
    repredict: &Repredict<'_>,
) -> Result<Vec<NonsampledMse>> {
    cfg.validate()?;
    if family != fit.family {
        return Err(Error::invalid("family does not match the fit"));
    }
    let opts = FitOptions::default();
    let prep = Prepared::new(family, data)?;
    let global = fit_constant_prepared(&prep, &opts).ok().map(|f| f.params);
    let preds: Vec<Prediction> = targets
        .iter()
        .map(|&j| predict_prepared(&prep, data, j, fit.bandwidth, global.as_ref(), &opts))
        .collect::<Result<_>>()?;
    let phi = fitted_params(fit)?;
    let means: Vec<f64> = fit
        .areas
        .iter()
        .zip(&phi)
        .map(|(&i, p)| p.prior_mean(family, &data[i].x))
        .collect::<Result<_>>()?;

    // Each replicate returns (m̂ˢ_j, μˢ_j) per target.
    let reps: Vec<Result<Vec<(f64, f64)>>> = par_map(cfg.replicates, |s| {
        let mut rng = Stream::derive(cfg.seed, &[NONSAMPLED_STREAM, s as u64]);
        let mut boot = data.to_vec();
        for (k, &i) in fit.areas.iter().enumerate() {
            boot[i].y = family.sample_at(phi[k].nu, means[k], data[i].n, &mut rng).1;
        }
        let truths: Vec<f64> = preds
            .iter()
            .map(|p| family.sample_at(p.params.nu, p.mean, 0.0, &mut rng).0)
            .collect();
        let again = repredict(&boot, targets)?;
        Ok(again.into_iter().zip(truths).collect())
    });
    let failed = reps.iter().filter(|r| r.is_err()).count();
    if failed as f64 > MAX_FAILURE_RATE * cfg.replicates as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: cfg.replicates,
        });
    }
    let ok: Vec<&Vec<(f64, f64)>> = reps.iter().filter_map(|r| r.as_ref().ok()).collect();
    let used = ok.len() as f64;

    preds
        .into_iter()
        .enumerate()
        .map(|(t, pred)| {
            let (mut sq, mut cross) = (Sum::default(), Sum::default());
            for rep in &ok {
                let (m_s, mu_s) = rep[t];
                let d = m_s - pred.mean;
                sq.add(d * d);
                cross.add(2.0 * d * (pred.mean - mu_s));
            }
            let x = &data[pred.record].x;
            let prior_variance = family.prior_variance(&pred.params, x)?;
            let (estimation, cross) = (sq.value() / used, cross.value() / used);
            let raw = prior_variance + estimation + cross;
            Ok(NonsampledMse {
                prior_variance,
                estimation,
                cross,
                raw,
                mse: raw.max(estimation),
                truncated: raw < estimation,
                failed_replicates: failed,
                prediction: pred,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_hand_example() {
        let out = benchmark_estimates(&[1.0, 1.0], &[2.0, 4.0], &[0.5, 0.5]).unwrap();
        assert_eq!(out, vec![3.0, 3.0]);
    }

    #[test]
    fn benchmark_leaves_satisfied_constraint_alone() {
        let mu = [1.0, 3.0];
        let out = benchmark_estimates(&mu, &[3.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(out, mu.to_vec());
    }

    #[test]
    fn weights_are_validated() {
        assert!(benchmark_estimates(&[1.0], &[1.0], &[0.9]).is_err());
        assert!(benchmark_estimates(&[1.0, 1.0], &[1.0, 1.0], &[1.5, -0.5]).is_err());
    }

    #[test]
    fn compensated_sum() {
        let mut s = Sum::default();
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }
}
