//! Simulation harness: scenario generators, simulated MSE, relative
//! differences of root MSE, and the relative bias and coefficient of
//! variation study of the MSE estimators.
//!
//! Scenario I lets the hyperparameters vary over the unit square,
//!
//! ```text
//! β₀(u) = u₁ − u₂ − 1,   β₁(u) = √(u₁² + u₂²),   ν(u) = c·exp(u₁ + u₂ − 1)
//! ```
//!
//! with `c = n_i` (or a fixed constant). Scenario II holds them at
//! `β = (0.1, 0.7)`, `ν = 50`. Coordinates are uniform on `(0,1)²` and the
//! covariate uniform on `(−1, 1)`.
//!
//! Locations, covariates and sample sizes form a design drawn once per
//! study and held fixed over replicates unless `redraw_design` is set.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bandwidth::{select_bandwidth_with, BandwidthSearch, CvContext};
use crate::data::{AreaRecord, Prepared};
use crate::error::{Error, Result};
use crate::family::{Family, HyperParams};
use crate::local_fit::{fit_all_prepared, fit_constant_prepared, fit_prepared_at, FitOptions};
use crate::par_map;
use crate::rng::Stream;
use crate::uncertainty::{hybrid_mse, BootstrapConfig, Sum, MAX_FAILURE_RATE};

const DESIGN_STREAM: u64 = 10;
const REPLICATE_STREAM: u64 = 11;
const ESTIMATION_STREAM: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Spatially varying hyperparameters.
    Varying,
    /// Spatially constant hyperparameters.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplePattern {
    Constant(f64),
    /// Sampled areas split into equal consecutive groups, one size each.
    Grouped(Vec<f64>),
}

impl SamplePattern {
    pub fn size(&self, i: usize, m: usize) -> f64 {
        match self {
            SamplePattern::Constant(n) => *n,
            SamplePattern::Grouped(g) => g[self.group(i, m)],
        }
    }

    pub fn group(&self, i: usize, m: usize) -> usize {
        match self {
            SamplePattern::Constant(_) => 0,
            SamplePattern::Grouped(g) => (i * g.len() / m).min(g.len() - 1),
        }
    }

    pub fn groups(&self) -> usize {
        match self {
            SamplePattern::Constant(_) => 1,
            SamplePattern::Grouped(g) => g.len(),
        }
    }

    /// Size used for ν in scenario I at non-sampled areas.
    pub fn nominal(&self) -> f64 {
        match self {
            SamplePattern::Constant(n) => *n,
            SamplePattern::Grouped(g) => g.iter().sum::<f64>() / g.len() as f64,
        }
    }
}

/// Scale `c` of `ν(u) = c·exp(u₁ + u₂ − 1)` in scenario I.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuScale {
    SampleSize,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub family: Family,
    pub scenario: Scenario,
    /// Sampled areas.
    pub m: usize,
    /// Non-sampled areas.
    pub k: usize,
    pub pattern: SamplePattern,
    pub nu_scale: NuScale,
    pub replications: usize,
    pub seed: u64,
    pub redraw_design: bool,
    /// Use this bandwidth instead of re-selecting it in every replicate.
    pub fixed_bandwidth: Option<f64>,
    /// Golden-section tolerance as a fraction of the upper bandwidth.
    pub cv_tol_factor: f64,
}

impl ScenarioConfig {
    /// Constant n = 20, no non-sampled areas.
    pub fn new(family: Family, scenario: Scenario, m: usize, replications: usize, seed: u64) -> Self {
        Self {
            family,
            scenario,
            m,
            k: 0,
            pattern: SamplePattern::Constant(20.0),
            nu_scale: NuScale::SampleSize,
            replications,
            seed,
            redraw_design: false,
            fixed_bandwidth: None,
            cv_tol_factor: 1e-2,
        }
    }

    /// The MSE-estimator study layout: five groups of sizes 10..30 and
    /// `ν(u) = 30·exp(u₁ + u₂ − 1)`.
    pub fn grouped(family: Family, m: usize, replications: usize, seed: u64) -> Self {
        Self {
            pattern: SamplePattern::Grouped(vec![10.0, 15.0, 20.0, 25.0, 30.0]),
            nu_scale: NuScale::Fixed(30.0),
            ..Self::new(family, Scenario::Varying, m, replications, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 3 {
            return Err(Error::invalid("at least three sampled areas are required"));
        }
        if self.replications < 1 {
            return Err(Error::invalid("at least one replication is required"));
        }
        if let SamplePattern::Grouped(g) = &self.pattern {
            if g.is_empty() || g.len() > self.m {
                return Err(Error::invalid("group count must be between 1 and m"));
            }
        }
        let sizes_ok = match &self.pattern {
            SamplePattern::Constant(n) => *n > 0.0,
            SamplePattern::Grouped(g) => g.iter().all(|&n| n > 0.0),
        };
        if !sizes_ok {
            return Err(Error::invalid("sample sizes must be positive"));
        }
        if self.family == Family::BinomialBeta {
            let integral = match &self.pattern {
                SamplePattern::Constant(n) => n.fract() == 0.0,
                SamplePattern::Grouped(g) => g.iter().all(|n| n.fract() == 0.0),
            };
            if !integral {
                return Err(Error::invalid("binomial sample sizes must be integers"));
            }
        }
        if !(self.cv_tol_factor > 0.0) {
            return Err(Error::invalid("cv tolerance factor must be positive"));
        }
        Ok(())
    }

    /// True hyperparameters at location `u` for sample size `n`.
    pub fn true_params(&self, u: [f64; 2], n: f64) -> HyperParams {
        match self.scenario {
            Scenario::Constant => HyperParams {
                beta: vec![0.1, 0.7],
                nu: 50.0,
            },
            Scenario::Varying => {
                let scale = match self.nu_scale {
                    NuScale::SampleSize => n,
                    NuScale::Fixed(c) => c,
                };
                HyperParams {
                    beta: vec![u[0] - u[1] - 1.0, u[0].hypot(u[1])],
                    nu: scale * (u[0] + u[1] - 1.0).exp(),
                }
            }
        }
    }
}

/// Locations, covariate and sample size of every area. Sampled areas come
/// first, then the non-sampled ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub u: Vec<[f64; 2]>,
    pub x: Vec<f64>,
    /// Sample size; zero for non-sampled areas.
    pub n: Vec<f64>,
    pub group: Vec<usize>,
    pub truth: Vec<HyperParams>,
}

impl Design {
    pub fn draw(cfg: &ScenarioConfig, rng: &mut Stream) -> Self {
        let total = cfg.m + cfg.k;
        let mut d = Design {
            u: Vec::with_capacity(total),
            x: Vec::with_capacity(total),
            n: Vec::with_capacity(total),
            group: Vec::with_capacity(total),
            truth: Vec::with_capacity(total),
        };
        for i in 0..total {
            let u = [rng.uniform(), rng.uniform()];
            let x = rng.uniform_in(-1.0, 1.0);
            let sampled = i < cfg.m;
            let n = if sampled { cfg.pattern.size(i, cfg.m) } else { 0.0 };
            let nominal = if sampled { n } else { cfg.pattern.nominal() };
            d.u.push(u);
            d.x.push(x);
            d.n.push(n);
            d.group.push(if sampled { cfg.pattern.group(i, cfg.m) } else { 0 });
            d.truth.push(cfg.true_params(u, nominal));
        }
        d
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// One simulated dataset. `truth` covers every area; it is kept apart from
/// the records so that no fitting path can read it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub records: Vec<AreaRecord>,
    pub truth: Vec<f64>,
}

/// Draw true means for all areas and direct estimates for the sampled ones.
pub fn gen_scenario(cfg: &ScenarioConfig, design: &Design, rng: &mut Stream) -> SimDataset {
    let family = cfg.family;
    let mut records = Vec::with_capacity(design.len());
    let mut truth = Vec::with_capacity(design.len());
    for i in 0..design.len() {
        let phi = &design.truth[i];
        let x = vec![1.0, design.x[i]];
        let m = family.mean_link(phi.beta[0] + phi.beta[1] * design.x[i]);
        let (mu, y) = family.sample_at(phi.nu, m, design.n[i], rng);
        truth.push(mu);
        let id = format!("a{i:04}");
        records.push(if design.n[i] > 0.0 {
            AreaRecord::sampled(id, y, design.n[i], x, design.u[i])
        } else {
            AreaRecord::unsampled(id, x, design.u[i])
        });
    }
    SimDataset { records, truth }
}

/// Estimates of every area's mean, sampled and non-sampled.
pub type Estimator<'a> = dyn Fn(&SimDataset) -> Result<Vec<f64>> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Spatially varying: local fits with a cross-validated bandwidth.
    Sv,
    /// Spatially constant: one global fit.
    Sc,
}

/// Spatially varying estimates with the bandwidth selected by CV.
pub fn sv_estimates(cfg: &ScenarioConfig, data: &[AreaRecord]) -> Result<(Vec<f64>, f64)> {
    let opts = FitOptions::default();
    let family = cfg.family;
    let b = match cfg.fixed_bandwidth {
        Some(b) => b,
        None => {
            let search = BandwidthSearch::for_data(data, cfg.cv_tol_factor)?;
            select_bandwidth_with(&CvContext::with_options(family, data, opts)?, &search)?.bandwidth
        }
    };
    let prep = Prepared::new(family, data)?;
    let global = fit_constant_prepared(&prep, &opts).ok().map(|f| f.params);
    let sv = fit_all_prepared(&prep, b, global.as_ref(), &opts)?;
    let mut out = Vec::with_capacity(data.len());
    for (i, r) in data.iter().enumerate() {
        if r.sampled {
            let phi = sv.params(i).ok_or_else(|| Error::FitFailed {
                area: i,
                reason: "local fit failed".into(),
            })?;
            out.push(phi.bayes_estimate(family, r.y, r.n, &r.x)?);
        } else {
            let fit = fit_prepared_at(&prep, r.u, None, b, i, global.as_ref(), &opts)?;
            out.push(fit.params.prior_mean(family, &r.x)?);
        }
    }
    Ok((out, b))
}

/// Spatially constant estimates: Bayes estimates (prior means for
/// non-sampled areas) at the global fit.
pub fn sc_estimates(family: Family, data: &[AreaRecord]) -> Result<Vec<f64>> {
    let prep = Prepared::new(family, data)?;
    let phi = fit_constant_prepared(&prep, &FitOptions::default())?.params;
    data.iter()
        .map(|r| {
            if r.sampled {
                phi.bayes_estimate(family, r.y, r.n, &r.x)
            } else {
                phi.prior_mean(family, &r.x)
            }
        })
        .collect()
}

pub fn method_estimator<'a>(cfg: &'a ScenarioConfig, method: Method) -> impl Fn(&SimDataset) -> Result<Vec<f64>> + Sync + 'a {
    move |d: &SimDataset| match method {
        Method::Sv => sv_estimates(cfg, &d.records).map(|(e, _)| e),
        Method::Sc => sc_estimates(cfg.family, &d.records),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseTable {
    /// `mse[e][i]`: simulated MSE of estimator `e` at area `i`.
    pub mse: Vec<Vec<f64>>,
    pub replicates_used: usize,
    pub failed_replicates: usize,
}

fn design_for(cfg: &ScenarioConfig, r: usize) -> Design {
    let path: Vec<u64> = if cfg.redraw_design {
        vec![DESIGN_STREAM, r as u64]
    } else {
        vec![DESIGN_STREAM]
    };
    Design::draw(cfg, &mut Stream::derive(cfg.seed, &path))
}

/// The fixed design of a study (the first replicate's when redrawn).
pub fn study_design(cfg: &ScenarioConfig) -> Design {
    design_for(cfg, 0)
}

/// Simulated MSE `R⁻¹ Σ_r (μ̂_i⁽ʳ⁾ − μ_i⁽ʳ⁾)²` of several estimators on
/// common replicated datasets. A replicate in which any estimator fails is
/// dropped for all of them.
pub fn simulate_mse_with(cfg: &ScenarioConfig, estimators: &[&Estimator<'_>]) -> Result<MseTable> {
    cfg.validate()?;
    let total = cfg.m + cfg.k;
    let reps: Vec<Result<Vec<Vec<f64>>>> = par_map(cfg.replications, |r| {
        let design = design_for(cfg, r);
        let mut rng = Stream::derive(cfg.seed, &[REPLICATE_STREAM, r as u64]);
        let data = gen_scenario(cfg, &design, &mut rng);
        estimators
            .iter()
            .map(|est| {
                let e = est(&data)?;
                if e.len() != total {
                    return Err(Error::invalid("estimator returned the wrong number of areas"));
                }
                Ok(e.iter().zip(&data.truth).map(|(a, b)| (a - b) * (a - b)).collect())
            })
            .collect()
    });
    let failed = reps.iter().filter(|r| r.is_err()).count();
    if failed as f64 > MAX_FAILURE_RATE * cfg.replications as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: cfg.replications,
        });
    }
    let ok: Vec<&Vec<Vec<f64>>> = reps.iter().filter_map(|r| r.as_ref().ok()).collect();
    let used = ok.len();
    let mse = (0..estimators.len())
        .map(|e| {
            (0..total)
                .map(|i| {
                    let mut s = Sum::default();
                    ok.iter().for_each(|rep| s.add(rep[e][i]));
                    s.value() / used as f64
                })
                .collect()
        })
        .collect();
    Ok(MseTable {
        mse,
        replicates_used: used,
        failed_replicates: failed,
    })
}

pub fn simulate_mse(cfg: &ScenarioConfig, method: Method) -> Result<Vec<f64>> {
    let est = method_estimator(cfg, method);
    Ok(simulate_mse_with(cfg, &[&est])?.mse.remove(0))
}

/// `100·(√MSE_SV − √MSE_SC)/√MSE_SC`, undefined where `MSE_SC = 0`.
pub fn relative_difference(mse_sv: &[f64], mse_sc: &[f64]) -> Vec<Option<f64>> {
    mse_sv
        .iter()
        .zip(mse_sc)
        .map(|(&sv, &sc)| {
            if sc > 0.0 {
                Some(100.0 * (sv.sqrt() - sc.sqrt()) / sc.sqrt())
            } else {
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub design: Design,
    pub mse_sv: Vec<f64>,
    pub mse_sc: Vec<f64>,
    pub rd: Vec<Option<f64>>,
    pub replicates_used: usize,
    pub failed_replicates: usize,
}

/// SV against SC on common random numbers.
pub fn compare_methods(cfg: &ScenarioConfig) -> Result<Comparison> {
    let sv = method_estimator(cfg, Method::Sv);
    let sc = method_estimator(cfg, Method::Sc);
    let table = simulate_mse_with(cfg, &[&sv, &sc])?;
    let rd = relative_difference(&table.mse[0], &table.mse[1]);
    Ok(Comparison {
        design: study_design(cfg),
        mse_sv: table.mse[0].clone(),
        mse_sc: table.mse[1].clone(),
        rd,
        replicates_used: table.replicates_used,
        failed_replicates: table.failed_replicates,
    })
}

impl Comparison {
    /// One row per area.
    pub fn to_csv(&self, m: usize) -> String {
        let mut out = String::from("area,sampled,u1,u2,x,n,mse_sv,mse_sc,rd\n");
        for i in 0..self.mse_sv.len() {
            let rd = self.rd[i].map(fmt_num).unwrap_or_default();
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{},{},{},{rd}",
                u8::from(i < m),
                fmt_num(self.design.u[i][0]),
                fmt_num(self.design.u[i][1]),
                fmt_num(self.design.x[i]),
                fmt_num(self.design.n[i]),
                fmt_num(self.mse_sv[i]),
                fmt_num(self.mse_sc[i]),
            );
        }
        out
    }
}

/// Percentage relative bias and coefficient of variation of an MSE
/// estimator against the simulated MSE, per area:
/// `RB = 100·(mean_s est − mse)/mse`, `CV = 100·√(mean_s (est − mse)²)/mse`.
pub fn rb_cv(true_mse: &[f64], estimates: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let s = estimates.len() as f64;
    true_mse
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (mut mean, mut sq) = (Sum::default(), Sum::default());
            for e in estimates {
                mean.add(e[i]);
                sq.add((e[i] - t) * (e[i] - t));
            }
            (100.0 * (mean.value() / s - t) / t, 100.0 * (sq.value() / s).sqrt() / t)
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: usize,
    pub n: f64,
    pub rb_hybrid: f64,
    pub cv_hybrid: f64,
    pub rb_naive: f64,
    pub cv_naive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbCvResult {
    pub groups: Vec<GroupRow>,
    pub true_mse: Vec<f64>,
    pub rb_hybrid: Vec<f64>,
    pub cv_hybrid: Vec<f64>,
    pub rb_naive: Vec<f64>,
    pub cv_naive: Vec<f64>,
    pub estimation_runs_used: usize,
    pub failed_estimation_runs: usize,
    pub truth_replicates_used: usize,
}

impl RbCvResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,n,rb_hybrid,cv_hybrid,rb_naive,cv_naive\n");
        for g in &self.groups {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                g.group + 1,
                fmt_num(g.n),
                fmt_num(g.rb_hybrid),
                fmt_num(g.cv_hybrid),
                fmt_num(g.rb_naive),
                fmt_num(g.cv_naive)
            );
        }
        out
    }
}

/// Two-level study of the naive and hybrid MSE estimators at the sampled
/// areas: the simulated MSE of the SV estimator from `cfg.replications`
/// runs, then `estimation_runs` fresh datasets on each of which both MSE
/// estimators are computed with `boot.replicates` bootstrap replicates.
pub fn rb_cv_study(cfg: &ScenarioConfig, estimation_runs: usize, boot: &BootstrapConfig) -> Result<RbCvResult> {
    cfg.validate()?;
    boot.validate()?;
    if estimation_runs < 1 {
        return Err(Error::invalid("at least one estimation run is required"));
    }
    let m = cfg.m;
    let sv = method_estimator(cfg, Method::Sv);
    let truth = simulate_mse_with(cfg, &[&sv])?;
    let true_mse: Vec<f64> = truth.mse[0][..m].to_vec();

    let runs: Vec<Result<(Vec<f64>, Vec<f64>)>> = par_map(estimation_runs, |s| {
        let design = design_for(cfg, s);
        let mut rng = Stream::derive(cfg.seed, &[ESTIMATION_STREAM, s as u64]);
        let data = gen_scenario(cfg, &design, &mut rng);
        let boot_seed = rng.next_u64() ^ boot.seed;
        let family = cfg.family;
        let b = match cfg.fixed_bandwidth {
            Some(b) => b,
            None => {
                let search = BandwidthSearch::for_data(&data.records, cfg.cv_tol_factor)?;
                select_bandwidth_with(&CvContext::new(family, &data.records)?, &search)?.bandwidth
            }
        };
        let prep = Prepared::new(family, &data.records)?;
        let fit = fit_all_prepared(&prep, b, None, &FitOptions::default())?;
        let cfg_s = BootstrapConfig {
            seed: boot_seed,
            ..*boot
        };
        let report = hybrid_mse(&fit, &data.records, None, &cfg_s)?;
        Ok(report.areas.iter().map(|a| (a.hybrid_mse, a.naive_mse)).unzip())
    });
    let failed = runs.iter().filter(|r| r.is_err()).count();
    if failed as f64 > MAX_FAILURE_RATE * estimation_runs as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: estimation_runs,
        });
    }
    let (hybrid, naive): (Vec<Vec<f64>>, Vec<Vec<f64>>) =
        runs.into_iter().filter_map(|r| r.ok()).unzip();
    let used = hybrid.len();
    let (rb_h, cv_h) = rb_cv(&true_mse, &hybrid);
    let (rb_n, cv_n) = rb_cv(&true_mse, &naive);
    let groups = group_means(cfg, &[&rb_h, &cv_h, &rb_n, &cv_n])
        .into_iter()
        .enumerate()
        .map(|(g, v)| GroupRow {
            group: g,
            n: match &cfg.pattern {
                SamplePattern::Constant(n) => *n,
                SamplePattern::Grouped(sizes) => sizes[g],
            },
            rb_hybrid: v[0],
            cv_hybrid: v[1],
            rb_naive: v[2],
            cv_naive: v[3],
        })
        .collect();
    Ok(RbCvResult {
        groups,
        true_mse,
        rb_hybrid: rb_h,
        cv_hybrid: cv_h,
        rb_naive: rb_n,
        cv_naive: cv_n,
        estimation_runs_used: used,
        failed_estimation_runs: failed,
        truth_replicates_used: truth.replicates_used,
    })
}

/// Within-group means over the sampled areas, `out[g][series]`.
pub fn group_means(cfg: &ScenarioConfig, series: &[&Vec<f64>]) -> Vec<Vec<f64>> {
    let g = cfg.pattern.groups();
    let mut sums = vec![vec![0.0; series.len()]; g];
    let mut counts = vec![0usize; g];
    for i in 0..cfg.m {
        let gi = cfg.pattern.group(i, cfg.m);
        counts[gi] += 1;
        for (j, s) in series.iter().enumerate() {
            sums[gi][j] += s[i];
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect()
}

/// Twelve significant digits in scientific notation; parsing the text back
/// gives the same value the text denotes.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.11e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rd_examples() {
        let rd = relative_difference(&[1.0, 0.81, 4.0, 1.0], &[1.0, 1.0, 1.0, 0.0]);
        assert_eq!(rd[0], Some(0.0));
        assert!((rd[1].unwrap() + 10.0).abs() < 1e-12);
        assert!((rd[2].unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(rd[3], None);
    }

    #[test]
    fn perfect_estimator_has_zero_rb_cv() {
        let t = vec![0.5, 1.5];
        let (rb, cv) = rb_cv(&t, &[t.clone(), t.clone()]);
        assert!(rb.iter().chain(&cv).all(|&v| v == 0.0));
    }

    #[test]
    fn groups_are_consecutive_and_equal() {
        let cfg = ScenarioConfig::grouped(Family::PoissonGamma, 50, 1, 0);
        let sizes: Vec<f64> = (0..50).map(|i| cfg.pattern.size(i, 50)).collect();
        assert_eq!(sizes[0], 10.0);
        assert_eq!(sizes[9], 10.0);
        assert_eq!(sizes[10], 15.0);
        assert_eq!(sizes[49], 30.0);
    }

    #[test]
    fn constant_scenario_truth() {
        let cfg = ScenarioConfig::new(Family::BinomialBeta, Scenario::Constant, 10, 1, 3);
        let d = study_design(&cfg);
        assert!(d.truth.iter().all(|p| p.beta == vec![0.1, 0.7] && p.nu == 50.0));
    }

    #[test]
    fn fmt_round_trips_printed_value() {
        for x in [0.1, 1.0 / 3.0, -2.5e-9, 12345.678901234] {
            let s = fmt_num(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(fmt_num(back), s);
        }
    }
}
