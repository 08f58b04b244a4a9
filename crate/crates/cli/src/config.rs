//! Run configuration from a flat `key = value` file and command-line flags.
//! Flags win over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sveb::Family;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config line {line}: expected 'key = value'")]
    Syntax { line: usize },

    #[error("config line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },

    #[error("option '{key}': {message}")]
    Value { key: String, message: String },

    #[error("{0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum BandwidthMode {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "column")]
pub enum Weights {
    /// `c_i = n_i / Σ n_k`.
    DefaultN,
    Column(String),
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub family: Family,
    pub input: PathBuf,
    pub out: PathBuf,
    pub standardize: bool,
    pub bandwidth: BandwidthMode,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub tol: Option<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub weights: Weights,
    pub refit_bandwidth: bool,
}

pub const KEYS: [&str; 12] = [
    "family",
    "input",
    "out",
    "standardize",
    "bandwidth",
    "lo",
    "hi",
    "tol",
    "replicates",
    "seed",
    "weights",
    "refit_bandwidth",
];

/// Raw option values by key, before typing.
pub type Options = BTreeMap<String, String>;

pub fn read_config_file(path: &Path) -> Result<Options, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Options, ConfigError> {
    let mut out = Options::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: k + 1 })?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { line: k + 1, key });
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

fn value_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.into(),
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(opts: &Options, key: &str) -> Result<Option<T>, ConfigError> {
    opts.get(key)
        .map(|v| v.parse::<T>().map_err(|_| value_err(key, format!("'{v}' is not a valid number"))))
        .transpose()
}

fn parse_bool(opts: &Options, key: &str, default: bool) -> Result<bool, ConfigError> {
    match opts.get(key).map(String::as_str) {
        None => Ok(default),
        Some("true" | "1" | "yes" | "on") => Ok(true),
        Some("false" | "0" | "no" | "off") => Ok(false),
        Some(v) => Err(value_err(key, format!("'{v}' is not a boolean"))),
    }
}

impl RunConfig {
    /// Type and cross-check merged options.
    pub fn from_options(opts: &Options) -> Result<Self, ConfigError> {
        let family = opts
            .get("family")
            .ok_or_else(|| value_err("family", "is required"))?
            .parse::<Family>()
            .map_err(|e| value_err("family", e.to_string()))?;
        let input = PathBuf::from(opts.get("input").ok_or_else(|| value_err("input", "is required"))?);
        let out = PathBuf::from(opts.get("out").map(String::as_str).unwrap_or("sveb-out"));
        let bandwidth = match opts.get("bandwidth").map(String::as_str) {
            None | Some("auto") => BandwidthMode::Auto,
            Some(v) => {
                let b: f64 = v
                    .parse()
                    .map_err(|_| value_err("bandwidth", format!("'{v}' is neither 'auto' nor a number")))?;
                if !(b > 0.0 && b.is_finite()) {
                    return Err(value_err("bandwidth", "must be positive"));
                }
                BandwidthMode::Fixed(b)
            }
        };
        let (lo, hi, tol) = (parse_num::<f64>(opts, "lo")?, parse_num::<f64>(opts, "hi")?, parse_num::<f64>(opts, "tol")?);
        if matches!(bandwidth, BandwidthMode::Fixed(_)) && (lo.is_some() || hi.is_some() || tol.is_some()) {
            return Err(ConfigError::Inconsistent(
                "a fixed bandwidth excludes the search options lo, hi and tol".into(),
            ));
        }
        let weights = match opts.get("weights").map(String::as_str) {
            None | Some("n") => Weights::DefaultN,
            Some("none") => Weights::None,
            Some(v) => match v.strip_prefix("column:") {
                Some(c) if !c.is_empty() => Weights::Column(c.to_string()),
                _ => return Err(value_err("weights", format!("'{v}' is not one of n, none, column:NAME"))),
            },
        };
        let replicates = parse_num::<usize>(opts, "replicates")?.unwrap_or(200);
        if replicates < 2 {
            return Err(value_err("replicates", "at least two bootstrap replicates are required"));
        }
        Ok(Self {
            family,
            input,
            out,
            standardize: parse_bool(opts, "standardize", true)?,
            bandwidth,
            lo,
            hi,
            tol,
            replicates,
            seed: parse_num::<u64>(opts, "seed")?.unwrap_or(1),
            weights,
            refit_bandwidth: parse_bool(opts, "refit_bandwidth", false)?,
        })
    }

    /// The options that reproduce this configuration.
    pub fn to_options(&self) -> Options {
        let mut o = Options::new();
        o.insert("family".into(), self.family.name().into());
        o.insert("input".into(), self.input.display().to_string());
        o.insert("out".into(), self.out.display().to_string());
        o.insert("standardize".into(), self.standardize.to_string());
        o.insert(
            "bandwidth".into(),
            match self.bandwidth {
                BandwidthMode::Auto => "auto".into(),
                BandwidthMode::Fixed(b) => format!("{b:?}"),
            },
        );
        for (k, v) in [("lo", self.lo), ("hi", self.hi), ("tol", self.tol)] {
            if let Some(v) = v {
                o.insert(k.into(), format!("{v:?}"));
            }
        }
        o.insert("replicates".into(), self.replicates.to_string());
        o.insert("seed".into(), self.seed.to_string());
        o.insert(
            "weights".into(),
            match &self.weights {
                Weights::DefaultN => "n".into(),
                Weights::None => "none".into(),
                Weights::Column(c) => format!("column:{c}"),
            },
        );
        o.insert("refit_bandwidth".into(), self.refit_bandwidth.to_string());
        o
    }
}

/// File options overridden by flag options.
pub fn merge(file: Options, flags: Options) -> Options {
    let mut out = file;
    out.extend(flags);
    out
}
