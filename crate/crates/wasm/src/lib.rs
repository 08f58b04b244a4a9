//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers and strings and returns a JSON string.
//! Failures come back as `{"error": "..."}` so the page can show them
//! without exceptions crossing the boundary.

use serde_json::{json, Value};
use sveb::bandwidth::{cv_curve, select_bandwidth_with, BandwidthSearch, CvContext};
use sveb::family::bayes_estimate;
use sveb::sim::{gen_scenario, sc_estimates, study_design, Scenario, ScenarioConfig, SimDataset};
use sveb::{Family, HyperParams, KernelConfig, Stream};
use wasm_bindgen::prelude::*;

fn scenario(name: &str) -> sveb::Result<Scenario> {
    match name {
        "varying" => Ok(Scenario::Varying),
        "constant" => Ok(Scenario::Constant),
        _ => Err(sveb::Error::InvalidInput(format!("unknown scenario '{name}'"))),
    }
}

fn dataset(family: &str, scen: &str, m: usize, seed: u64) -> sveb::Result<(ScenarioConfig, SimDataset)> {
    let cfg = ScenarioConfig::new(family.parse::<Family>()?, scenario(scen)?, m, 1, seed);
    cfg.validate()?;
    let design = study_design(&cfg);
    let data = gen_scenario(&cfg, &design, &mut Stream::derive(seed, &[1]));
    Ok((cfg, data))
}

fn respond(r: sveb::Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Simulate one dataset and fit it. A `bandwidth` of zero or less selects
/// it by cross validation.
#[wasm_bindgen]
pub fn fit_scenario(family: &str, scen: &str, m: usize, seed: u64, bandwidth: f64) -> String {
    respond(fit_scenario_impl(family, scen, m, seed, bandwidth))
}

fn fit_scenario_impl(family: &str, scen: &str, m: usize, seed: u64, bandwidth: f64) -> sveb::Result<Value> {
    let (cfg, data) = dataset(family, scen, m, seed)?;
    let records = &data.records;
    let (b, cv) = if bandwidth > 0.0 {
        (bandwidth, None)
    } else {
        let ctx = CvContext::new(cfg.family, records)?;
        let sel = select_bandwidth_with(&ctx, &BandwidthSearch::for_data(records, cfg.cv_tol_factor)?)?;
        (sel.bandwidth, Some(sel.cv))
    };
    let fit = sveb::local_fit::fit_all(cfg.family, records, &KernelConfig::new(b)?)?;
    let sc = sc_estimates(cfg.family, records)?;
    let mut areas = Vec::with_capacity(records.len());
    let (mut sse_sv, mut sse_sc, mut used) = (0.0, 0.0, 0usize);
    for (i, r) in records.iter().enumerate() {
        let sv = match fit.params(i) {
            Some(phi) => Some(phi.bayes_estimate(cfg.family, r.y, r.n, &r.x)?),
            None => None,
        };
        if let Some(e) = sv {
            sse_sv += (e - data.truth[i]).powi(2);
            sse_sc += (sc[i] - data.truth[i]).powi(2);
            used += 1;
        }
        areas.push(json!({
            "u": r.u,
            "y": r.y,
            "n": r.n,
            "truth": data.truth[i],
            "sv": sv,
            "sc": sc[i],
            "nu": fit.params(i).map(|p| p.nu),
        }));
    }
    Ok(json!({
        "bandwidth": b,
        "cv": cv,
        "failures": fit.failures(),
        "mse_sv": sse_sv / used.max(1) as f64,
        "mse_sc": sse_sc / used.max(1) as f64,
        "areas": areas,
    }))
}

/// Leave-one-out CV criterion on an evenly spaced grid of bandwidths.
#[wasm_bindgen]
pub fn cv_scan(family: &str, scen: &str, m: usize, seed: u64, points: usize) -> String {
    respond((|| {
        let (cfg, data) = dataset(family, scen, m, seed)?;
        let search = BandwidthSearch::for_data(&data.records, cfg.cv_tol_factor)?;
        let points = points.max(2);
        let grid: Vec<f64> = (0..points)
            .map(|k| search.lo + (search.hi - search.lo) * k as f64 / (points - 1) as f64)
            .collect();
        let ctx = CvContext::new(cfg.family, &data.records)?;
        let curve: Vec<Value> = cv_curve(&ctx, &grid)
            .into_iter()
            .map(|e| json!({ "b": e.b, "cv": e.value.is_finite().then_some(e.value) }))
            .collect();
        Ok(json!({ "curve": curve }))
    })())
}

/// Posterior mean and its posterior risk as the sample size grows, for a
/// single area with direct estimate `y` and prior `(nu, prior_mean)`.
#[wasm_bindgen]
pub fn shrinkage(family: &str, y: f64, nu: f64, prior_mean: f64, max_n: f64) -> String {
    respond((|| {
        let family: Family = family.parse()?;
        let x = [1.0];
        let phi = HyperParams::new(vec![family.link(prior_mean)], nu)?;
        let steps = 60;
        let mut curve = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let n = max_n * k as f64 / steps as f64;
            let n = if family == Family::Gaussian { n.max(1e-9) } else { n };
            curve.push(json!({
                "n": n,
                "estimate": bayes_estimate(y, n, nu, prior_mean)?,
                "risk": family.r1(n, &phi, &x)?,
            }));
        }
        Ok(json!({ "prior_variance": family.prior_variance(&phi, &x)?, "curve": curve }))
    })())
}
