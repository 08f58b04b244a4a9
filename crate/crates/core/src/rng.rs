//! Seedable, counter-based random streams and the exact samplers used by
//! the parametric bootstrap and the simulation harness.
//!
//! Every stream is a ChaCha8 keystream. Independent sub-streams are
//! addressed by a path of integers (replicate index, bootstrap index, ...),
//! so a replicate's draws never depend on which worker ran it or in which
//! order.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Stream {
    core: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            core: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Sub-stream of `seed` addressed by `path`. Distinct paths give
    /// non-overlapping keystreams.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let mut id = 0x5eed_u64;
        for &p in path {
            id = splitmix64(id ^ splitmix64(p));
        }
        let mut core = ChaCha8Rng::seed_from_u64(seed);
        core.set_stream(id);
        Self {
            core,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.core.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let bits = self.core.next_u64() >> 11;
            if bits != 0 {
                return bits as f64 * (1.0 / (1u64 << 53) as f64);
            }
        }
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via the Marsaglia polar method.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let a = 2.0 * self.uniform() - 1.0;
            let b = 2.0 * self.uniform() - 1.0;
            let s = a * a + b * b;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(b * f);
                return a * f;
            }
        }
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Log of a Gamma(shape, 1) draw. Marsaglia–Tsang, with the
    /// `U^(1/shape)` boost for `shape < 1` applied on the log scale so tiny
    /// shapes do not underflow.
    pub fn ln_gamma_variate(&mut self, shape: f64) -> f64 {
        debug_assert!(shape > 0.0);
        if shape < 1.0 {
            let boost = self.uniform().ln() / shape;
            return self.ln_gamma_variate(shape + 1.0) + boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.standard_normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d.ln() + v.ln();
            }
        }
    }

    /// Gamma draw with the given shape and rate.
    pub fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        self.ln_gamma_variate(shape).exp() / rate
    }

    /// Beta(a, b) as a ratio of two gamma draws.
    pub fn beta(&mut self, a: f64, b: f64) -> f64 {
        let lx = self.ln_gamma_variate(a);
        let ly = self.ln_gamma_variate(b);
        1.0 / (1.0 + (ly - lx).exp())
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        let dist = Poisson::new(mean).expect("finite positive Poisson mean");
        dist.sample(&mut self.core) as u64
    }

    pub fn binomial(&mut self, trials: u64, p: f64) -> u64 {
        if p <= 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return trials;
        }
        let dist = Binomial::new(trials, p).expect("valid binomial parameters");
        dist.sample(&mut self.core)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_draws() {
        let mut a = Stream::derive(7, &[1, 2]);
        let mut b = Stream::derive(7, &[1, 2]);
        for _ in 0..100 {
            assert_eq!(a.gamma(0.3, 2.0).to_bits(), b.gamma(0.3, 2.0).to_bits());
            assert_eq!(a.binomial(20, 0.3), b.binomial(20, 0.3));
        }
        let mut c = Stream::derive(7, &[2, 1]);
        assert_ne!(Stream::derive(7, &[1, 2]).uniform(), c.uniform());
    }

    #[test]
    fn gamma_moments() {
        let mut s = Stream::new(11);
        let (shape, rate) = (0.4, 2.0);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| s.gamma(shape, rate)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (shape / (rate * rate) / n as f64).sqrt();
        assert!((mean - shape / rate).abs() < 4.0 * se, "mean {mean}");
        assert!((var / (shape / (rate * rate)) - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn beta_tiny_shapes_stay_finite() {
        let mut s = Stream::new(3);
        for _ in 0..1000 {
            let p = s.beta(1e-3, 2e-3);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn normal_moments() {
        let mut s = Stream::new(5);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| d * d).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
    }
}
