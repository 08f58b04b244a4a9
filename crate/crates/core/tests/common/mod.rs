//! Shared oracles and fixtures for the integration tests.

#![allow(dead_code, clippy::excessive_precision)]

use statrs::distribution::{Beta, Binomial, Continuous, Discrete, Gamma, Normal, Poisson};
use sveb::{AreaRecord, Family, HyperParams, Stream};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7, 15) quadrature to relative tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut parts = vec![(a, b, kronrod(f, a, b))];
    for _ in 0..5000 {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= tol * total.abs() {
            break;
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .unwrap();
        let (lo, hi, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, kronrod(f, lo, mid)));
        parts.push((mid, hi, kronrod(f, mid, hi)));
    }
    parts.iter().map(|p| p.2 .0).sum()
}

/// Log joint density `log f(y | μ) + log π(μ)` from statrs.
pub fn log_joint(family: Family, y: f64, n: f64, nu: f64, m: f64, mu: f64) -> f64 {
    if family.is_count() && !(mu > 0.0 && mu < if family == Family::BinomialBeta { 1.0 } else { f64::INFINITY }) {
        return f64::NEG_INFINITY;
    }
    match family {
        Family::Gaussian => {
            Normal::new(mu, (1.0 / n).sqrt()).unwrap().ln_pdf(y)
                + Normal::new(m, (1.0 / nu).sqrt()).unwrap().ln_pdf(mu)
        }
        Family::PoissonGamma => {
            let z = (n * y).round() as u64;
            Poisson::new(n * mu).unwrap().ln_pmf(z) + Gamma::new(nu * m, nu).unwrap().ln_pdf(mu)
        }
        Family::BinomialBeta => {
            let z = (n * y).round() as u64;
            Binomial::new(mu, n.round() as u64).unwrap().ln_pmf(z)
                + Beta::new(nu * m, nu * (1.0 - m)).unwrap().ln_pdf(mu)
        }
    }
}

/// Numerical marginal log-likelihood and posterior mean of one area.
///
/// Integration runs on an unbounded scale (identity, log or logit) centred
/// at the posterior location so the integrand is smooth and its tails are
/// thin.
pub fn numeric_marginal(family: Family, y: f64, n: f64, nu: f64, m: f64) -> (f64, f64) {
    type Map = fn(f64) -> f64;
    let (centre, a, b, to_mu, jac): (f64, f64, f64, Map, Map) = match family {
        Family::Gaussian => {
            let post = (n * y + nu * m) / (n + nu);
            let sd = (1.0 / (n + nu)).sqrt();
            (post, post - 40.0 * sd, post + 40.0 * sd, |s| s, |_| 1.0)
        }
        Family::PoissonGamma => {
            // On s = log μ the integrand is ∝ exp(A·s − R·eˢ).
            let shape = n * y + nu * m;
            let rate = n + nu;
            let centre = (shape / rate).ln();
            let lo = centre - 45.0 * (1.0 / shape).max(1.0 / shape.sqrt());
            let hi = centre + (10.0 / shape.sqrt()).max((1.0 + 50.0 / shape).ln() + 2.0);
            (centre, lo, hi, f64::exp, f64::exp)
        }
        Family::BinomialBeta => {
            // On the logit scale the integrand is ∝ e^{A·s}/(1 + eˢ)^{A+B}.
            let a = n * y + nu * m;
            let b = n - n * y + nu * (1.0 - m);
            let centre = (a / b).ln();
            let sd = (1.0 / a + 1.0 / b).sqrt();
            let logistic: Map = |s| 1.0 / (1.0 + (-s).exp());
            let jac: Map = |s| {
                let p = 1.0 / (1.0 + (-s).exp());
                p * (1.0 - p)
            };
            (centre, centre - 40.0 * sd - 40.0 / a, centre + 40.0 * sd + 40.0 / b, logistic, jac)
        }
    };
    let log_f = |s: f64| log_joint(family, y, n, nu, m, to_mu(s)) + jac(s).ln();
    let peak = log_f(centre);
    let g = |s: f64| {
        let v = (log_f(s) - peak).exp();
        if v.is_finite() { v } else { 0.0 }
    };
    let mass = integrate(&g, a, b, 1e-14);
    let first = integrate(&|s| g(s) * to_mu(s), a, b, 1e-14);
    (mass.ln() + peak, first / mass)
}

/// Random hyperparameters and one draw of `(y, n)` from the model. Prior
/// shape parameters are kept at or above 0.5 so the quadrature range stays
/// representable.
pub fn random_case(family: Family, rng: &mut Stream) -> (f64, f64, f64, f64) {
    loop {
        let nu = (rng.uniform_in(0.5f64.ln(), 500.0f64.ln())).exp();
        let (m, n) = match family {
            Family::Gaussian => (rng.uniform_in(-3.0, 3.0), rng.uniform_in(0.2, 20.0)),
            Family::PoissonGamma => (rng.uniform_in(0.05, 3.0), rng.uniform_in(1.0, 60.0).round()),
            Family::BinomialBeta => (rng.uniform_in(0.05, 0.95), rng.uniform_in(2.0, 60.0).round()),
        };
        let shapes_ok = match family {
            Family::Gaussian => true,
            Family::PoissonGamma => nu * m >= 0.5,
            Family::BinomialBeta => nu * m >= 0.5 && nu * (1.0 - m) >= 0.5,
        };
        if shapes_ok {
            let (_, y) = family.sample_at(nu, m, n, rng);
            return (y, n, nu, m);
        }
    }
}

/// Two-covariate synthetic dataset (intercept plus one covariate) with
/// hyperparameters drawn from `phi_at(u)`.
pub fn synthetic(
    family: Family,
    m: usize,
    n: f64,
    seed: u64,
    phi_at: &dyn Fn([f64; 2]) -> HyperParams,
) -> Vec<AreaRecord> {
    let mut rng = Stream::new(seed);
    (0..m)
        .map(|i| {
            let u = [rng.uniform(), rng.uniform()];
            let x = vec![1.0, rng.uniform_in(-1.0, 1.0)];
            let phi = phi_at(u);
            let (_, y) = family.sample_area(&phi, &x, n, &mut rng).unwrap();
            AreaRecord::sampled(format!("a{i}"), y, n, x, u)
        })
        .collect()
}

pub fn constant_phi(family: Family) -> impl Fn([f64; 2]) -> HyperParams {
    move |_| match family {
        Family::Gaussian => HyperParams::new(vec![0.5, 1.0], 2.0).unwrap(),
        _ => HyperParams::new(vec![0.1, 0.7], 50.0).unwrap(),
    }
}

pub fn varying_phi(family: Family) -> impl Fn([f64; 2]) -> HyperParams {
    move |u: [f64; 2]| {
        let beta = vec![u[0] - u[1] - 1.0, u[0].hypot(u[1])];
        let nu = match family {
            Family::Gaussian => 4.0 * (u[0] + u[1] - 1.0).exp(),
            _ => 20.0 * (u[0] + u[1] - 1.0).exp(),
        };
        HyperParams::new(beta, nu).unwrap()
    }
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
