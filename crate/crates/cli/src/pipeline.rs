//! The analysis pipeline behind the dataset subcommands: bandwidth
//! selection, local fits, bootstrap MSE, benchmarking and non-sampled
//! predictions, rendered as CSV reports plus a manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sveb::bandwidth::{cv_curve, select_bandwidth_with, BandwidthSearch, CvContext, Evaluation, DEFAULT_LO};
use sveb::data::{max_pairwise_distance, standardize_coordinates, validate};
use sveb::local_fit::fit_all;
use sveb::sim::fmt_num;
use sveb::uncertainty::{
    default_weights, hybrid_mse_with, nonsampled_mse_many, standard_refit, BootstrapConfig, EstimateReport,
    NonsampledMse,
};
use sveb::{AreaRecord, FitOptions, KernelConfig, SvFit};

use crate::config::{BandwidthMode, Options, RunConfig, Weights};
use crate::dataset::{load_dataset, Dataset};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Fit,
    Mse,
    Benchmark,
    Predict,
    Run,
    CvCurve,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Mse => "mse",
            Command::Benchmark => "benchmark",
            Command::Predict => "predict",
            Command::Run => "run",
            Command::CvCurve => "cv-curve",
        }
    }

    fn bootstrap(self) -> bool {
        matches!(self, Command::Mse | Command::Benchmark | Command::Run)
    }

    fn benchmark(self) -> bool {
        matches!(self, Command::Benchmark | Command::Run)
    }

    fn predict(self) -> bool {
        matches!(self, Command::Predict | Command::Run)
    }
}

/// Named output files in write order.
pub type Artifacts = Vec<(String, String)>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Options,
    /// Extra command options, such as the cv-curve grid size.
    pub extra: Options,
    pub input_sha256: String,
    pub outputs: BTreeMap<String, String>,
}

pub fn manifest_json(manifest: &Manifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}

fn load(cfg: &RunConfig) -> Result<(Dataset, String), CliError> {
    let bytes = std::fs::read(&cfg.input).map_err(|e| CliError::io(&cfg.input, e))?;
    let sha = sha256_hex(&bytes);
    let mut data = load_dataset(&cfg.input, cfg.family)?;
    if cfg.standardize {
        standardize_coordinates(&mut data.records);
    }
    validate(cfg.family, &data.records)?;
    Ok((data, sha))
}

fn search_for(cfg: &RunConfig, data: &[AreaRecord]) -> Result<BandwidthSearch, CliError> {
    let hi = match cfg.hi {
        Some(h) => h,
        None => 2.0 * max_pairwise_distance(data).powi(2),
    };
    let lo = cfg.lo.unwrap_or(DEFAULT_LO);
    Ok(BandwidthSearch::new(lo, hi, cfg.tol.unwrap_or(1e-3 * hi))?)
}

struct Selected {
    bandwidth: f64,
    log: Vec<Evaluation>,
    search: Option<BandwidthSearch>,
}

fn choose_bandwidth(cfg: &RunConfig, data: &[AreaRecord], ctx: &CvContext) -> Result<Selected, CliError> {
    match cfg.bandwidth {
        BandwidthMode::Fixed(b) => Ok(Selected {
            bandwidth: b,
            log: cv_curve(ctx, &[b]),
            search: None,
        }),
        BandwidthMode::Auto => {
            let search = search_for(cfg, data)?;
            let sel = select_bandwidth_with(ctx, &search)?;
            Ok(Selected {
                bandwidth: sel.bandwidth,
                log: sel.log,
                search: Some(search),
            })
        }
    }
}

fn benchmark_weights(cfg: &RunConfig, data: &Dataset) -> Result<Option<Vec<f64>>, CliError> {
    Ok(match &cfg.weights {
        Weights::None => None,
        Weights::DefaultN => Some(default_weights(&data.records)),
        Weights::Column(name) => {
            let col = data
                .extra
                .get(name)
                .ok_or_else(|| CliError::validation(format!("benchmark weight column '{name}' is missing")))?;
            let mut c = Vec::new();
            for (r, v) in data.records.iter().zip(col) {
                if r.sampled {
                    c.push(v.ok_or_else(|| {
                        CliError::validation(format!("area '{}' has no value in weight column '{name}'", r.id))
                    })?);
                }
            }
            Some(c)
        }
    })
}

/// Run one dataset command and return its artifacts, manifest last.
pub fn execute(command: Command, cfg: &RunConfig, extra: &Options) -> Result<Artifacts, CliError> {
    let (data, input_sha) = load(cfg)?;
    let records = &data.records;
    let ctx = CvContext::new(cfg.family, records)?;
    let mut out = Artifacts::new();

    if command == Command::CvCurve {
        let points: usize = match extra.get("points") {
            Some(p) => p.parse().map_err(|_| CliError::validation(format!("points '{p}' is not a count")))?,
            None => 50,
        };
        if points < 2 {
            return Err(CliError::validation("a CV curve needs at least two points"));
        }
        let search = search_for(cfg, records)?;
        let grid: Vec<f64> = (0..points)
            .map(|k| search.lo + (search.hi - search.lo) * k as f64 / (points - 1) as f64)
            .collect();
        out.push(("cv_curve.csv".into(), evaluations_csv(&cv_curve(&ctx, &grid), None)));
    } else {
        let sel = choose_bandwidth(cfg, records, &ctx)?;
        let fit = fit_all(cfg.family, records, &KernelConfig::new(sel.bandwidth)?)?;
        let weights = if command.benchmark() {
            let w = benchmark_weights(cfg, &data)?;
            if w.is_none() {
                return Err(CliError::validation("benchmarking needs weights; set weights to n or column:NAME"));
            }
            w
        } else {
            None
        };
        let report = if command.bootstrap() {
            let boot = BootstrapConfig {
                replicates: cfg.replicates,
                seed: cfg.seed,
                refit_bandwidth: cfg.refit_bandwidth,
            };
            let search = if cfg.refit_bandwidth {
                Some(sel.search.unwrap_or(search_for(cfg, records)?))
            } else {
                None
            };
            let refit = standard_refit(cfg.family, sel.bandwidth, search, FitOptions::default());
            Some(hybrid_mse_with(&fit, records, weights.as_deref(), &boot, &refit)?)
        } else {
            None
        };
        out.push(("estimates.csv".into(), estimates_csv(&data, &fit, report.as_ref())?));
        out.push(("bandwidth.csv".into(), evaluations_csv(&sel.log, Some(sel.bandwidth))));
        if command.predict() {
            let targets: Vec<usize> = (0..records.len()).filter(|&i| !records[i].sampled).collect();
            let preds = if targets.is_empty() {
                Vec::new()
            } else {
                let boot = BootstrapConfig::new(cfg.replicates, cfg.seed)?;
                nonsampled_mse_many(cfg.family, &targets, records, &fit, &boot)?
            };
            out.push(("predictions.csv".into(), predictions_csv(&data, &preds)));
        }
    }

    // The output directory is chosen at replay time.
    let mut config = cfg.to_options();
    config.remove("out");
    let manifest = Manifest {
        tool: "sveb".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        config,
        extra: extra.clone(),
        input_sha256: input_sha,
        outputs: out.iter().map(|(n, body)| (n.clone(), sha256_hex(body.as_bytes()))).collect(),
    };
    out.push(("manifest.json".into(), manifest_json(&manifest)));
    Ok(out)
}

pub fn write_artifacts(dir: &Path, artifacts: &Artifacts) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, body) in artifacts {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn csv_text(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("UTF-8 CSV")
}

fn estimates_csv(data: &Dataset, fit: &SvFit, report: Option<&EstimateReport>) -> Result<String, CliError> {
    let family = fit.family;
    let p = data.covariates.len();
    let mut header: Vec<String> = [
        "area_id", "y", "n", "estimate", "naive_mse", "hybrid_mse", "hybrid_raw", "truncated", "benchmarked",
        "excess_mse", "nu", "a",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=p).map(|k| format!("beta{k}")));
    header.extend(["iterations", "converged", "at_nu_cap", "at_nu_floor", "status"].map(String::from));
    let mut rows = vec![header];
    let by_record: BTreeMap<usize, &sveb::uncertainty::AreaEstimate> =
        report.map(|r| r.areas.iter().map(|a| (a.record, a)).collect()).unwrap_or_default();
    for (k, &i) in fit.areas.iter().enumerate() {
        let r = &data.records[i];
        let mut row = vec![r.id.clone(), fmt_num(r.y), fmt_num(r.n)];
        match &fit.fits[k] {
            Ok(local) => {
                let phi = &local.params;
                let est = phi.bayes_estimate(family, r.y, r.n, &r.x)?;
                let naive = family.r1(r.n, phi, &r.x)?;
                let a = by_record.get(&i);
                row.extend([
                    fmt_num(est),
                    fmt_num(naive),
                    opt(a.map(|a| a.hybrid_mse)),
                    opt(a.map(|a| a.hybrid_raw)),
                    a.map(|a| u8::from(a.truncated).to_string()).unwrap_or_default(),
                    opt(a.and_then(|a| a.benchmarked)),
                    opt(a.and_then(|a| a.excess_mse)),
                    fmt_num(phi.nu),
                    if family == sveb::Family::Gaussian { fmt_num(phi.random_effect_variance()) } else { String::new() },
                ]);
                row.extend(phi.beta.iter().map(|&b| fmt_num(b)));
                let d = &local.diagnostics;
                row.extend([
                    d.iterations.to_string(),
                    u8::from(d.converged).to_string(),
                    u8::from(d.at_nu_cap).to_string(),
                    u8::from(d.at_nu_floor).to_string(),
                    "ok".to_string(),
                ]);
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), 9 + p + 4));
                row.push(e.to_string());
            }
        }
        rows.push(row);
    }
    Ok(csv_text(rows))
}

fn evaluations_csv(log: &[Evaluation], selected: Option<f64>) -> String {
    let mut rows = vec![["order", "b", "cv", "selected"].map(String::from).to_vec()];
    let mut marked = false;
    for (k, e) in log.iter().enumerate() {
        let is_sel = !marked && selected == Some(e.b);
        marked |= is_sel;
        rows.push(vec![(k + 1).to_string(), fmt_num(e.b), fmt_num(e.value), u8::from(is_sel).to_string()]);
    }
    if selected.is_none() {
        rows.iter_mut().for_each(|r| {
            r.pop();
        });
    }
    csv_text(rows)
}

fn predictions_csv(data: &Dataset, preds: &[NonsampledMse]) -> String {
    let p = data.covariates.len();
    let mut header: Vec<String> = [
        "area_id", "u1", "u2", "prediction", "prior_variance", "estimation", "cross", "mse_raw", "mse", "truncated",
        "failed_replicates", "nu",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=p).map(|k| format!("beta{k}")));
    let mut rows = vec![header];
    for m in preds {
        let r = &data.records[m.prediction.record];
        let mut row = vec![
            r.id.clone(),
            fmt_num(r.u[0]),
            fmt_num(r.u[1]),
            fmt_num(m.prediction.mean),
            fmt_num(m.prior_variance),
            fmt_num(m.estimation),
            fmt_num(m.cross),
            fmt_num(m.raw),
            fmt_num(m.mse),
            u8::from(m.truncated).to_string(),
            m.failed_replicates.to_string(),
            fmt_num(m.prediction.params.nu),
        ];
        row.extend(m.prediction.params.beta.iter().map(|&b| fmt_num(b)));
        rows.push(row);
    }
    csv_text(rows)
}
