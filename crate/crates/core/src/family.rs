//! The three conjugate NEF-QVF area-level families and their closed forms.
//!
//! Each family pairs a first-stage sampling model for the direct estimator
//! `y` (scale `n`) with the conjugate prior on the area mean `μ`:
//!
//! | family          | first stage               | prior on μ                  | (v0, v1, v2) |
//! |-----------------|---------------------------|-----------------------------|--------------|
//! | `Gaussian`      | y ~ N(μ, 1/n)             | μ ~ N(m, 1/ν)               | (1, 0, 0)    |
//! | `PoissonGamma`  | n·y ~ Poisson(n·μ)        | μ ~ Gamma(ν·m, rate ν)      | (0, 1, 0)    |
//! | `BinomialBeta`  | n·y ~ Binomial(n, μ)      | μ ~ Beta(ν·m, ν·(1 − m))    | (0, 1, −1)   |
//!
//! with prior mean `m = ψ′(x′β)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::special::{ln_beta, ln_choose, ln_factorial, ln_gamma, ln_gamma_increment, LN_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    PoissonGamma,
    BinomialBeta,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gaussian, Family::PoissonGamma, Family::BinomialBeta];

    /// Quadratic variance constants `(v0, v1, v2)`.
    pub fn variance_constants(self) -> (f64, f64, f64) {
        match self {
            Family::Gaussian => (1.0, 0.0, 0.0),
            Family::PoissonGamma => (0.0, 1.0, 0.0),
            Family::BinomialBeta => (0.0, 1.0, -1.0),
        }
    }

    pub fn v2(self) -> f64 {
        self.variance_constants().2
    }

    pub fn is_count(self) -> bool {
        !matches!(self, Family::Gaussian)
    }

    /// ψ′: maps the linear predictor to the prior mean.
    pub fn mean_link(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::PoissonGamma => eta.exp(),
            Family::BinomialBeta => logistic(eta),
        }
    }

    /// Inverse of [`Family::mean_link`].
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::PoissonGamma => mu.ln(),
            Family::BinomialBeta => (mu / (1.0 - mu)).ln(),
        }
    }

    pub fn in_mean_domain(self, mu: f64) -> bool {
        match self {
            Family::Gaussian => mu.is_finite(),
            Family::PoissonGamma => mu > 0.0 && mu.is_finite(),
            Family::BinomialBeta => mu > 0.0 && mu < 1.0,
        }
    }

    fn check_mean(self, mu: f64) -> Result<()> {
        if self.in_mean_domain(mu) {
            Ok(())
        } else {
            Err(Error::invalid(format!("mean {mu} outside the {self} mean domain")))
        }
    }

    fn check_precision(self, nu: f64) -> Result<()> {
        if nu > self.v2().max(0.0) && nu.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("prior precision {nu} must be finite and > max(0, v2)")))
        }
    }

    /// Q(μ) = v0 + v1·μ + v2·μ².
    pub fn variance_fn(self, mu: f64) -> Result<f64> {
        self.check_mean(mu)?;
        let (v0, v1, v2) = self.variance_constants();
        Ok(v0 + v1 * mu + v2 * mu * mu)
    }

    /// Log normalizing constant C(ν, m) of the conjugate prior, as a
    /// density for the natural parameter.
    pub fn log_norm_const(self, nu: f64, m: f64) -> Result<f64> {
        self.check_precision(nu)?;
        self.check_mean(m)?;
        Ok(match self {
            Family::Gaussian => 0.5 * (nu.ln() - LN_2PI) - 0.5 * nu * m * m,
            Family::PoissonGamma => nu * m * nu.ln() - ln_gamma(nu * m),
            Family::BinomialBeta => -ln_beta(nu * m, nu * (1.0 - m)),
        })
    }

    /// Base-measure term c(y, n) of the first stage.
    pub fn log_base_measure(self, y: f64, n: f64) -> Result<f64> {
        if !(n > 0.0) {
            return Err(Error::invalid(format!("scale n = {n} must be positive")));
        }
        Ok(match self {
            Family::Gaussian => 0.5 * (n.ln() - LN_2PI) - 0.5 * n * y * y,
            Family::PoissonGamma => {
                let z = count(self, y, n)?;
                z * n.ln() - ln_factorial(z)
            }
            Family::BinomialBeta => {
                let z = count(self, y, n)?;
                ln_choose(n, z)
            }
        })
    }

    /// `C(ν, m) − C(n + ν, μ̃)`, the φ-dependent part of the marginal
    /// log-likelihood of one area. Evaluated in a cancellation-free form.
    pub(crate) fn marginal_kernel(self, y: f64, n: f64, nu: f64, m: f64) -> f64 {
        if n == 0.0 {
            return 0.0;
        }
        match self {
            Family::Gaussian => {
                let r = y - m;
                0.5 * (nu / (n + nu)).ln() - 0.5 * n * nu / (n + nu) * r * r + 0.5 * n * y * y
            }
            Family::PoissonGamma => {
                let z = (n * y).round();
                let a = nu * m;
                -a * (n / nu).ln_1p() - z * (n + nu).ln() + ln_gamma_increment(a, z)
            }
            Family::BinomialBeta => {
                let z = (n * y).round();
                let a = nu * m;
                let b = nu * (1.0 - m);
                ln_gamma_increment(a, z) + ln_gamma_increment(b, n - z)
                    - ln_gamma_increment(nu, n)
            }
        }
    }

    /// Marginal log-likelihood `c(y,n) + C(ν,m) − C(n+ν, μ̃)` of one area.
    pub fn marginal_loglik(self, y: f64, n: f64, phi: &HyperParams, x: &[f64]) -> Result<f64> {
        self.check_precision(phi.nu)?;
        let m = phi.prior_mean(self, x)?;
        self.check_mean(m)?;
        let c = self.log_base_measure(y, n)?;
        Ok(c + self.marginal_kernel(y, n, phi.nu, m))
    }

    /// Prior variance of μ: `Q(m)/(ν − v2)`.
    pub fn prior_variance(self, phi: &HyperParams, x: &[f64]) -> Result<f64> {
        self.check_precision(phi.nu)?;
        let m = phi.prior_mean(self, x)?;
        Ok(self.variance_fn(m)? / (phi.nu - self.v2()))
    }

    /// Leading MSE term `R1 = ν·Q(m)/((n+ν)(ν − v2))`, the posterior
    /// variance of μ averaged over the marginal of y.
    pub fn r1(self, n: f64, phi: &HyperParams, x: &[f64]) -> Result<f64> {
        if !(n >= 0.0) {
            return Err(Error::invalid(format!("scale n = {n} must be nonnegative")));
        }
        let m = phi.prior_mean(self, x)?;
        self.r1_at(n, phi.nu, m)
    }

    pub(crate) fn r1_at(self, n: f64, nu: f64, m: f64) -> Result<f64> {
        self.check_precision(nu)?;
        let q = self.variance_fn(m)?;
        Ok(nu * q / ((n + nu) * (nu - self.v2())))
    }

    /// Draw (μ, y) from the two-stage model at prior precision `nu` and
    /// prior mean `m`. For `n == 0` only μ is drawn and `y` is NaN.
    pub fn sample_at(self, nu: f64, m: f64, n: f64, rng: &mut Stream) -> (f64, f64) {
        let mu = match self {
            Family::Gaussian => rng.normal(m, (1.0 / nu).sqrt()),
            Family::PoissonGamma => rng.gamma(nu * m, nu),
            Family::BinomialBeta => rng.beta(nu * m, nu * (1.0 - m)),
        };
        if n == 0.0 {
            return (mu, f64::NAN);
        }
        let y = match self {
            Family::Gaussian => rng.normal(mu, (1.0 / n).sqrt()),
            Family::PoissonGamma => rng.poisson(n * mu) as f64 / n,
            Family::BinomialBeta => rng.binomial(n.round() as u64, mu) as f64 / n,
        };
        (mu, y)
    }

    /// Parametric draw of (true mean, direct estimate) for one area.
    pub fn sample_area(
        self,
        phi: &HyperParams,
        x: &[f64],
        n: f64,
        rng: &mut Stream,
    ) -> Result<(f64, f64)> {
        self.check_precision(phi.nu)?;
        let m = phi.prior_mean(self, x)?;
        self.check_mean(m)?;
        Ok(self.sample_at(phi.nu, m, n, rng))
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::PoissonGamma => "poisson_gamma",
            Family::BinomialBeta => "binomial_beta",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gaussian" | "fay_herriot" | "normal" => Ok(Family::Gaussian),
            "poisson_gamma" | "poisson" | "pg" => Ok(Family::PoissonGamma),
            "binomial_beta" | "binomial" | "bb" => Ok(Family::BinomialBeta),
            other => Err(Error::invalid(format!("unknown family '{other}'"))),
        }
    }
}

/// Overflow-safe logistic function.
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// The count `z = n·y` of a count family, snapped to the nearest integer.
pub fn count(family: Family, y: f64, n: f64) -> Result<f64> {
    let z = n * y;
    let rounded = z.round();
    if (z - rounded).abs() > 1e-6 * rounded.abs().max(1.0) || rounded < 0.0 {
        return Err(Error::invalid(format!(
            "n·y = {z} is not a nonnegative integer count"
        )));
    }
    if family == Family::BinomialBeta && rounded > n.round() {
        return Err(Error::invalid(format!("count {rounded} exceeds trials {n}")));
    }
    Ok(rounded)
}

/// Spatially varying (or global) hyperparameters φ = (β, ν).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub beta: Vec<f64>,
    pub nu: f64,
}

impl HyperParams {
    pub fn new(beta: Vec<f64>, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid(format!("prior precision {nu} must be positive")));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("non-finite regression coefficient"));
        }
        Ok(Self { beta, nu })
    }

    /// Gaussian parameterization by random-effect variance `A = 1/ν`.
    pub fn from_variance(beta: Vec<f64>, a: f64) -> Result<Self> {
        Self::new(beta, 1.0 / a)
    }

    pub fn log_nu(&self) -> f64 {
        self.nu.ln()
    }

    /// Random-effect variance `A = 1/ν` (the Fay–Herriot parameter).
    pub fn random_effect_variance(&self) -> f64 {
        1.0 / self.nu
    }

    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(Error::invalid(format!(
                "covariate length {} does not match {} coefficients",
                x.len(),
                self.beta.len()
            )));
        }
        Ok(dot(&self.beta, x))
    }

    /// Prior mean `m = ψ′(x′β)`.
    pub fn prior_mean(&self, family: Family, x: &[f64]) -> Result<f64> {
        Ok(family.mean_link(self.linear_predictor(x)?))
    }

    /// Bayes estimator of μ for one area at these hyperparameters.
    pub fn bayes_estimate(&self, family: Family, y: f64, n: f64, x: &[f64]) -> Result<f64> {
        bayes_estimate(y, n, self.nu, self.prior_mean(family, x)?)
    }
}

/// Posterior mean `(n·y + ν·m)/(n + ν)`.
pub fn bayes_estimate(y: f64, n: f64, nu: f64, m: f64) -> Result<f64> {
    if n < 0.0 || nu < 0.0 {
        return Err(Error::invalid("n and ν must be nonnegative"));
    }
    if n + nu == 0.0 {
        return Err(Error::invalid("n + ν = 0: Bayes estimator undefined"));
    }
    if n == 0.0 {
        return Ok(m);
    }
    let w = nu / (n + nu);
    Ok(y + w * (m - y))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn phi(beta0: f64, nu: f64) -> HyperParams {
        HyperParams::new(vec![beta0], nu).unwrap()
    }

    #[test]
    fn mean_link_examples() {
        assert_eq!(Family::Gaussian.mean_link(1.3), 1.3);
        assert_eq!(Family::PoissonGamma.mean_link(0.0), 1.0);
        assert_eq!(Family::BinomialBeta.mean_link(0.0), 0.5);
        assert_eq!(Family::BinomialBeta.mean_link(800.0), 1.0);
        assert_eq!(Family::BinomialBeta.mean_link(-800.0), 0.0);
        assert!(Family::BinomialBeta.mean_link(-40.0) > 0.0);
    }

    #[test]
    fn variance_fn_examples() {
        assert_eq!(Family::PoissonGamma.variance_fn(3.0).unwrap(), 3.0);
        assert_eq!(Family::BinomialBeta.variance_fn(0.5).unwrap(), 0.25);
        assert_eq!(Family::Gaussian.variance_fn(-7.0).unwrap(), 1.0);
        assert!(Family::BinomialBeta.variance_fn(1.2).is_err());
        assert!(Family::PoissonGamma.variance_fn(-1.0).is_err());
    }

    #[test]
    fn bayes_estimate_examples() {
        assert_abs_diff_eq!(bayes_estimate(1.0, 20.0, 20.0, 0.5).unwrap(), 0.75);
        assert_eq!(bayes_estimate(123.0, 0.0, 3.0, 0.4).unwrap(), 0.4);
        assert_abs_diff_eq!(bayes_estimate(0.9, 5.0, 1e-14, 0.1).unwrap(), 0.9, epsilon = 1e-12);
        assert!(bayes_estimate(0.9, 0.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn prior_variance_examples() {
        // Beta(4.5, 4.5): ab/((a+b)^2 (a+b+1)).
        let beta_var = 4.5 * 4.5 / (81.0 * 10.0);
        let v = Family::BinomialBeta.prior_variance(&phi(0.0, 9.0), &[1.0]).unwrap();
        assert_abs_diff_eq!(v, beta_var, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.025, epsilon = 1e-15);
        let a = 0.37;
        let v = Family::Gaussian.prior_variance(&phi(5.0, 1.0 / a), &[1.0]).unwrap();
        assert_abs_diff_eq!(v, a, epsilon = 1e-15);
        // Gamma(8, 2): shape / rate^2.
        let v = Family::PoissonGamma.prior_variance(&phi(4f64.ln(), 2.0), &[1.0]).unwrap();
        assert_abs_diff_eq!(v, 8.0 / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn log_norm_const_examples() {
        let c = Family::PoissonGamma.log_norm_const(2.0, 3.0).unwrap();
        assert_abs_diff_eq!(c, -0.628_608_659_422_374, epsilon = 1e-12);
        assert_abs_diff_eq!(Family::BinomialBeta.log_norm_const(2.0, 0.5).unwrap(), 0.0, epsilon = 1e-14);
        let tau = 2.0 * std::f64::consts::PI;
        assert_abs_diff_eq!(Family::Gaussian.log_norm_const(tau, 0.0).unwrap(), 0.0, epsilon = 1e-14);
        assert!(Family::BinomialBeta.log_norm_const(-1.0, 0.5).is_err());
        assert!(Family::PoissonGamma.log_norm_const(1.0, 0.0).is_err());
    }

    #[test]
    fn marginal_loglik_examples() {
        let ll = Family::PoissonGamma.marginal_loglik(0.0, 1.0, &phi(0.0, 1.0), &[1.0]).unwrap();
        assert_abs_diff_eq!(ll, 0.5f64.ln(), epsilon = 1e-14);
        let ll = Family::BinomialBeta.marginal_loglik(1.0, 1.0, &phi(0.0, 2.0), &[1.0]).unwrap();
        assert_abs_diff_eq!(ll, 0.5f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn kernel_matches_raw_normalizer_difference() {
        // The cancellation-free kernel equals C(ν,m) − C(n+ν, μ̃) computed naively.
        let cases = [
            (Family::Gaussian, 0.7, 4.0, 2.5, -0.3),
            (Family::PoissonGamma, 1.5, 2.0, 1.5, 0.8),
            (Family::BinomialBeta, 0.35, 20.0, 7.0, 0.4),
            (Family::BinomialBeta, 0.0, 10.0, 3.0, 0.2),
            (Family::BinomialBeta, 1.0, 10.0, 3.0, 0.2),
        ];
        for (f, y, n, nu, m) in cases {
            let mt = bayes_estimate(y, n, nu, m).unwrap();
            let raw = f.log_norm_const(nu, m).unwrap() - raw_norm_const(f, n + nu, mt);
            assert_abs_diff_eq!(f.marginal_kernel(y, n, nu, m), raw, epsilon = 1e-11);
        }
    }

    // C(ν, m) without the domain check, so boundary posterior means are allowed.
    fn raw_norm_const(f: Family, nu: f64, m: f64) -> f64 {
        match f {
            Family::Gaussian => 0.5 * (nu.ln() - LN_2PI) - 0.5 * nu * m * m,
            Family::PoissonGamma => nu * m * nu.ln() - ln_gamma(nu * m),
            Family::BinomialBeta => -ln_beta(nu * m, nu * (1.0 - m)),
        }
    }

    #[test]
    fn r1_examples() {
        // Gaussian A = D = 1: AD/(A+D).
        let r = Family::Gaussian.r1(1.0, &phi(0.0, 1.0), &[1.0]).unwrap();
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-15);
        for f in Family::ALL {
            let p = phi(0.2, 3.0);
            let r0 = f.r1(0.0, &p, &[1.0]).unwrap();
            assert_abs_diff_eq!(r0, f.prior_variance(&p, &[1.0]).unwrap(), epsilon = 1e-15);
        }
        let r = Family::PoissonGamma.r1(20.0, &phi(0.0, 20.0), &[1.0]).unwrap();
        assert_abs_diff_eq!(r, 0.025, epsilon = 1e-15);
    }

    #[test]
    fn r1_decreases_in_n() {
        for f in Family::ALL {
            let p = phi(0.3, 4.0);
            let mut prev = f64::INFINITY;
            for n in [0.0, 0.5, 1.0, 5.0, 50.0, 1e4] {
                let r = f.r1(n, &p, &[1.0]).unwrap();
                assert!(r < prev);
                prev = r;
            }
        }
    }

    #[test]
    fn count_validation() {
        assert_eq!(count(Family::PoissonGamma, 0.15, 20.0).unwrap(), 3.0);
        assert!(count(Family::PoissonGamma, 3.5 / 20.0, 20.0).is_err());
        assert!(count(Family::BinomialBeta, 1.2, 10.0).is_err());
    }

    #[test]
    fn parse_names() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!("weibull".parse::<Family>().is_err());
    }

    #[test]
    fn sample_area_is_deterministic() {
        for f in Family::ALL {
            let p = phi(0.1, 10.0);
            let a = f.sample_area(&p, &[1.0], 20.0, &mut Stream::new(99)).unwrap();
            let b = f.sample_area(&p, &[1.0], 20.0, &mut Stream::new(99)).unwrap();
            assert_eq!(a.0.to_bits(), b.0.to_bits());
            assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
    }
}
