//! The `simulate` and `generate` commands.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sveb::sim::{compare_methods, fmt_num, gen_scenario, rb_cv_study, study_design, Scenario, ScenarioConfig};
use sveb::uncertainty::BootstrapConfig;
use sveb::{Family, Stream};

use crate::config::Options;
use crate::error::CliError;
use crate::pipeline::{manifest_json, sha256_hex, Artifacts, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// RB/CV of the naive and hybrid MSE estimators over grouped sample sizes.
    Table1,
    /// SV against SC at sampled and non-sampled areas.
    Compare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub preset: Preset,
    pub families: Vec<Family>,
    pub scenario: Scenario,
    pub m: usize,
    pub k: usize,
    pub replications: usize,
    pub estimation_runs: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

impl SimSettings {
    pub fn to_options(&self) -> Options {
        let mut o = Options::new();
        o.insert(
            "preset".into(),
            match self.preset {
                Preset::Table1 => "table1",
                Preset::Compare => "compare",
            }
            .into(),
        );
        o.insert(
            "families".into(),
            self.families.iter().map(|f| f.name()).collect::<Vec<_>>().join(","),
        );
        o.insert(
            "scenario".into(),
            match self.scenario {
                Scenario::Varying => "varying",
                Scenario::Constant => "constant",
            }
            .into(),
        );
        for (k, v) in [
            ("m", self.m),
            ("k", self.k),
            ("replications", self.replications),
            ("estimation_runs", self.estimation_runs),
            ("bootstrap", self.bootstrap),
        ] {
            o.insert(k.into(), v.to_string());
        }
        o.insert("seed".into(), self.seed.to_string());
        o
    }

    pub fn from_options(o: &Options) -> Result<Self, CliError> {
        let get = |k: &str| o.get(k).ok_or_else(|| CliError::validation(format!("missing simulate option '{k}'")));
        let num = |k: &str| -> Result<usize, CliError> {
            get(k)?.parse().map_err(|_| CliError::validation(format!("simulate option '{k}' is not a count")))
        };
        Ok(Self {
            preset: match get("preset")?.as_str() {
                "table1" => Preset::Table1,
                "compare" => Preset::Compare,
                p => return Err(CliError::validation(format!("unknown preset '{p}'"))),
            },
            families: get("families")?
                .split(',')
                .map(|f| f.parse::<Family>().map_err(CliError::from))
                .collect::<Result<_, _>>()?,
            scenario: parse_scenario(get("scenario")?)?,
            m: num("m")?,
            k: num("k")?,
            replications: num("replications")?,
            estimation_runs: num("estimation_runs")?,
            bootstrap: num("bootstrap")?,
            seed: get("seed")?.parse().map_err(|_| CliError::validation("simulate seed is not an integer"))?,
        })
    }
}

pub fn parse_scenario(s: &str) -> Result<Scenario, CliError> {
    match s {
        "varying" | "i" | "I" => Ok(Scenario::Varying),
        "constant" | "ii" | "II" => Ok(Scenario::Constant),
        _ => Err(CliError::validation(format!("unknown scenario '{s}'; use varying or constant"))),
    }
}

pub fn simulate(s: &SimSettings) -> Result<Artifacts, CliError> {
    let mut out = Artifacts::new();
    match s.preset {
        Preset::Table1 => {
            let mut csv = String::from("family,group,n,rb_hybrid,cv_hybrid,rb_naive,cv_naive\n");
            for &family in &s.families {
                let cfg = ScenarioConfig::grouped(family, s.m, s.replications, s.seed);
                let boot = BootstrapConfig::new(s.bootstrap, s.seed)?;
                let res = rb_cv_study(&cfg, s.estimation_runs, &boot)?;
                for line in res.to_csv().lines().skip(1) {
                    let _ = writeln!(csv, "{family},{line}");
                }
            }
            out.push(("table1.csv".into(), csv));
        }
        Preset::Compare => {
            let mut csv = String::from("family,scenario,area,sampled,u1,u2,x,n,mse_sv,mse_sc,rd\n");
            for &family in &s.families {
                let cfg = ScenarioConfig {
                    k: s.k,
                    ..ScenarioConfig::new(family, s.scenario, s.m, s.replications, s.seed)
                };
                let cmp = compare_methods(&cfg)?;
                let scen = match s.scenario {
                    Scenario::Varying => "varying",
                    Scenario::Constant => "constant",
                };
                for line in cmp.to_csv(s.m).lines().skip(1) {
                    let _ = writeln!(csv, "{family},{scen},{line}");
                }
            }
            out.push(("comparison.csv".into(), csv));
        }
    }
    let manifest = Manifest {
        tool: "sveb".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "simulate".into(),
        config: s.to_options(),
        extra: Options::new(),
        input_sha256: String::new(),
        outputs: out.iter().map(|(n, b)| (n.clone(), sha256_hex(b.as_bytes()))).collect(),
    };
    out.push(("manifest.json".into(), manifest_json(&manifest)));
    Ok(out)
}

/// One simulated dataset in the input CSV schema, with the true means in
/// an extra `mu_true` column.
pub fn generate(family: Family, scenario: Scenario, m: usize, k: usize, seed: u64) -> Result<String, CliError> {
    let cfg = ScenarioConfig {
        k,
        ..ScenarioConfig::new(family, scenario, m, 1, seed)
    };
    cfg.validate()?;
    let design = study_design(&cfg);
    let data = gen_scenario(&cfg, &design, &mut Stream::derive(seed, &[1]));
    let mut csv = String::from("area_id,y,n,u1,u2,sampled,x1,mu_true\n");
    for (r, mu) in data.records.iter().zip(&data.truth) {
        let (y, n) = if r.sampled { (fmt_num(r.y), fmt_num(r.n)) } else { (String::new(), String::new()) };
        let _ = writeln!(
            csv,
            "{},{y},{n},{},{},{},{},{}",
            r.id,
            fmt_num(r.u[0]),
            fmt_num(r.u[1]),
            u8::from(r.sampled),
            fmt_num(r.x[1]),
            fmt_num(*mu)
        );
    }
    Ok(csv)
}
