use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{count, Family};

/// One small area: direct estimate, known scale, covariates and location.
///
/// For the count families `y = z/n` with `z` the observed count. For the
/// Gaussian family `n = 1/D` with `D` the sampling variance. `x` carries
/// the intercept slot explicitly. `y` and `n` are ignored for non-sampled
/// areas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaRecord {
    pub id: String,
    pub y: f64,
    pub n: f64,
    pub x: Vec<f64>,
    pub u: [f64; 2],
    pub sampled: bool,
}

impl AreaRecord {
    pub fn sampled(id: impl Into<String>, y: f64, n: f64, x: Vec<f64>, u: [f64; 2]) -> Self {
        Self {
            id: id.into(),
            y,
            n,
            x,
            u,
            sampled: true,
        }
    }

    pub fn unsampled(id: impl Into<String>, x: Vec<f64>, u: [f64; 2]) -> Self {
        Self {
            id: id.into(),
            y: f64::NAN,
            n: 0.0,
            x,
            u,
            sampled: false,
        }
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Largest distance between two sampled areas.
pub fn max_pairwise_distance(data: &[AreaRecord]) -> f64 {
    let pts: Vec<[f64; 2]> = data.iter().filter(|r| r.sampled).map(|r| r.u).collect();
    let mut best: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            best = best.max(distance(*a, *b));
        }
    }
    best
}

/// Z-score each coordinate axis in place (population standard deviation).
/// Axes with zero spread are only centred.
pub fn standardize_coordinates(data: &mut [AreaRecord]) {
    let n = data.len() as f64;
    if data.is_empty() {
        return;
    }
    for axis in 0..2 {
        let mean = data.iter().map(|r| r.u[axis]).sum::<f64>() / n;
        let var = data.iter().map(|r| (r.u[axis] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for r in data.iter_mut() {
            r.u[axis] -= mean;
            if sd > 0.0 {
                r.u[axis] /= sd;
            }
        }
    }
}

/// Check a dataset against the family's schema and return the covariate
/// dimension `p`.
pub fn validate(family: Family, data: &[AreaRecord]) -> Result<usize> {
    let p = data
        .first()
        .map(|r| r.x.len())
        .ok_or_else(|| Error::invalid("empty dataset"))?;
    if p == 0 {
        return Err(Error::invalid("covariate vector is empty"));
    }
    for (i, r) in data.iter().enumerate() {
        if r.x.len() != p {
            return Err(Error::invalid(format!(
                "area {i} ('{}') has {} covariates, expected {p}",
                r.id,
                r.x.len()
            )));
        }
        if r.x.iter().chain(r.u.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("area {i} ('{}') has non-finite covariates or coordinates", r.id)));
        }
        if !r.sampled {
            continue;
        }
        if !(r.n > 0.0 && r.n.is_finite()) {
            return Err(Error::invalid(format!("area {i} ('{}'): n must be positive", r.id)));
        }
        if !r.y.is_finite() {
            return Err(Error::invalid(format!("area {i} ('{}'): y must be finite", r.id)));
        }
        if family.is_count() {
            count(family, r.y, r.n)
                .map_err(|e| Error::invalid(format!("area {i} ('{}'): {e}", r.id)))?;
        }
        if family == Family::BinomialBeta && (r.n - r.n.round()).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "area {i} ('{}'): binomial trials n = {} is not an integer",
                r.id, r.n
            )));
        }
    }
    Ok(p)
}

/// Column-oriented view of the sampled areas used by the fitters.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub family: Family,
    pub p: usize,
    /// Record index of each sampled area.
    pub idx: Vec<usize>,
    pub y: Vec<f64>,
    pub n: Vec<f64>,
    /// `n·y` snapped to an integer for the count families, else `n·y`.
    pub z: Vec<f64>,
    /// Row-major covariates, `p` per sampled area.
    pub x: Vec<f64>,
    pub u: Vec<[f64; 2]>,
}

impl Prepared {
    pub fn new(family: Family, data: &[AreaRecord]) -> Result<Self> {
        let p = validate(family, data)?;
        let mut out = Prepared {
            family,
            p,
            idx: Vec::new(),
            y: Vec::new(),
            n: Vec::new(),
            z: Vec::new(),
            x: Vec::new(),
            u: Vec::new(),
        };
        for (i, r) in data.iter().enumerate().filter(|(_, r)| r.sampled) {
            let z = if family.is_count() {
                count(family, r.y, r.n)?
            } else {
                r.n * r.y
            };
            out.idx.push(i);
            out.y.push(if family.is_count() { z / r.n } else { r.y });
            out.n.push(if family == Family::BinomialBeta { r.n.round() } else { r.n });
            out.z.push(z);
            out.x.extend_from_slice(&r.x);
            out.u.push(r.u);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.x[k * self.p..(k + 1) * self.p]
    }

    /// Position among sampled areas of record `i`, if sampled.
    pub fn position(&self, record: usize) -> Option<usize> {
        self.idx.binary_search(&record).ok()
    }
}
