//! CSV ingestion.
//!
//! Required columns are `area_id, y, n, u1, u2, sampled` plus covariates
//! `x1..xq`. An intercept is prepended, so records carry `p = q + 1`
//! covariates. Other columns are ignored. `y` and `n` may be empty on
//! non-sampled rows.

use std::collections::HashMap;
use std::path::Path;

use sveb::{AreaRecord, Family};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV at line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("missing required column '{0}'")]
    MissingColumn(String),

    #[error("line {line}: column '{column}' value '{value}' is not a number")]
    NonNumeric { line: u64, column: String, value: String },

    #[error("line {line}: column 'sampled' must be 0 or 1, found '{value}'")]
    BadFlag { line: u64, value: String },

    #[error("line {line}: {message}")]
    InvalidValue { line: u64, message: String },

    #[error("line {line}: n·y = {z} is not a valid {family} count")]
    Integrality { line: u64, z: f64, family: Family },

    #[error("line {line}: duplicate area id '{id}' (first seen on line {first})")]
    DuplicateId { line: u64, id: String, first: u64 },

    #[error("the dataset has no rows")]
    Empty,
}

impl LoadError {
    /// File line the error refers to, header being line 1.
    pub fn line(&self) -> Option<u64> {
        match self {
            LoadError::Malformed { line, .. }
            | LoadError::NonNumeric { line, .. }
            | LoadError::BadFlag { line, .. }
            | LoadError::InvalidValue { line, .. }
            | LoadError::Integrality { line, .. }
            | LoadError::DuplicateId { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// A parsed dataset with optional extra numeric columns kept by name.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<AreaRecord>,
    pub covariates: Vec<String>,
    pub extra: HashMap<String, Vec<Option<f64>>>,
}

pub fn load_dataset(path: &Path, family: Family) -> Result<Dataset, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, family)
}

fn covariate_index(name: &str) -> Option<usize> {
    name.strip_prefix('x')?.parse().ok().filter(|&k| k >= 1)
}

pub fn parse_dataset(text: &str, family: Family) -> Result<Dataset, LoadError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| LoadError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LoadError::MissingColumn(name.to_string()))
    };
    let (id_c, y_c, n_c, u1_c, u2_c, s_c) = (col("area_id")?, col("y")?, col("n")?, col("u1")?, col("u2")?, col("sampled")?);
    let q = headers.iter().filter_map(covariate_index).max().unwrap_or(0);
    let x_cols: Vec<usize> = (1..=q).map(|k| col(&format!("x{k}"))).collect::<Result<_, _>>()?;
    let covariates = std::iter::once("intercept".to_string())
        .chain((1..=q).map(|k| format!("x{k}")))
        .collect();
    let known: Vec<usize> = [id_c, y_c, n_c, u1_c, u2_c, s_c].into_iter().chain(x_cols.iter().copied()).collect();
    let extra_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !known.contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut records = Vec::new();
    let mut extra: HashMap<String, Vec<Option<f64>>> = extra_cols.iter().map(|(_, h)| (h.clone(), Vec::new())).collect();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| LoadError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |c: usize| row.get(c).unwrap_or("");
        let number = |c: usize| -> Result<f64, LoadError> {
            let v = field(c);
            v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| LoadError::NonNumeric {
                line,
                column: headers[c].to_string(),
                value: v.to_string(),
            })
        };
        let id = field(id_c).to_string();
        if id.is_empty() {
            return Err(LoadError::InvalidValue {
                line,
                message: "empty area_id".into(),
            });
        }
        if let Some(&first) = seen.get(&id) {
            return Err(LoadError::DuplicateId { line, id, first });
        }
        seen.insert(id.clone(), line);
        let sampled = match field(s_c) {
            "1" => true,
            "0" => false,
            other => {
                return Err(LoadError::BadFlag {
                    line,
                    value: other.to_string(),
                })
            }
        };
        let mut x = Vec::with_capacity(q + 1);
        x.push(1.0);
        for &c in &x_cols {
            x.push(number(c)?);
        }
        let u = [number(u1_c)?, number(u2_c)?];
        let record = if sampled {
            let (y, n) = (number(y_c)?, number(n_c)?);
            if n <= 0.0 {
                return Err(LoadError::InvalidValue {
                    line,
                    message: format!("n = {n} must be positive"),
                });
            }
            check_count(family, y, n, line)?;
            AreaRecord::sampled(id, y, n, x, u)
        } else {
            AreaRecord::unsampled(id, x, u)
        };
        records.push(record);
        for (c, h) in &extra_cols {
            let v = field(*c);
            extra.get_mut(h).expect("extra column").push(v.parse::<f64>().ok());
        }
    }
    if records.is_empty() {
        return Err(LoadError::Empty);
    }
    Ok(Dataset {
        records,
        covariates,
        extra,
    })
}

fn check_count(family: Family, y: f64, n: f64, line: u64) -> Result<(), LoadError> {
    if !family.is_count() {
        return Ok(());
    }
    if family == Family::BinomialBeta && n.fract() != 0.0 {
        return Err(LoadError::InvalidValue {
            line,
            message: format!("binomial trials n = {n} must be an integer"),
        });
    }
    sveb::family::count(family, y, n).map(|_| ()).map_err(|_| LoadError::Integrality {
        line,
        z: n * y,
        family,
    })
}
