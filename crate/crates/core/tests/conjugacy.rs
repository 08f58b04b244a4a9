mod common;

use common::{numeric_marginal, random_case};
use sveb::family::bayes_estimate;
use sveb::{Family, HyperParams, Stream};

#[test]
fn marginal_and_posterior_mean_match_quadrature() {
    for family in Family::ALL {
        let mut rng = Stream::derive(2024, &[family as u64]);
        for case in 0..50 {
            let (y, n, nu, m) = random_case(family, &mut rng);
            let beta = vec![family.link(m)];
            let phi = HyperParams::new(beta, nu).unwrap();
            let ll = family.marginal_loglik(y, n, &phi, &[1.0]).unwrap();
            let (ll_num, post_num) = numeric_marginal(family, y, n, nu, m);
            assert!(
                (ll - ll_num).abs() <= 1e-8,
                "{family} case {case}: y={y} n={n} nu={nu} m={m}: {ll} vs {ll_num}"
            );
            let post = bayes_estimate(y, n, nu, m).unwrap();
            assert!(
                (post - post_num).abs() <= 1e-10 * post_num.abs().max(1.0),
                "{family} case {case}: posterior mean {post} vs {post_num}"
            );
        }
    }
}

#[test]
fn count_marginals_sum_to_one() {
    // Σ_z p(z) over the support, with the marginal from the closed form.
    for &(nu, m, n) in &[(3.0, 0.4, 10.0), (40.0, 0.7, 25.0), (0.8, 0.2, 5.0)] {
        let bb = Family::BinomialBeta;
        let phi = HyperParams::new(vec![bb.link(m)], nu).unwrap();
        let total: f64 = (0..=n as u64)
            .map(|z| bb.marginal_loglik(z as f64 / n, n, &phi, &[1.0]).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "binomial-beta mass {total}");

        let pg = Family::PoissonGamma;
        let phi = HyperParams::new(vec![m.ln()], nu).unwrap();
        let total: f64 = (0..4000u64)
            .map(|z| pg.marginal_loglik(z as f64 / n, n, &phi, &[1.0]).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10, "poisson-gamma mass {total}");
    }
}
