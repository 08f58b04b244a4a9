mod common;

use common::{constant_phi, spearman, synthetic, varying_phi};
use sveb::data::max_pairwise_distance;
use sveb::local_fit::{
    fit_all, fit_at, fit_constant, fit_local, fit_local_loo, fit_local_loo_with, local_loglik, FitOptions,
};
use sveb::{AreaRecord, Family, HyperParams, KernelConfig, Stream};

fn flat_for(data: &[AreaRecord]) -> KernelConfig {
    KernelConfig::new(1e6 * max_pairwise_distance(data)).unwrap()
}

fn assert_params_close(a: &HyperParams, b: &HyperParams, tol: f64, what: &str) {
    for (x, y) in a.beta.iter().zip(&b.beta) {
        assert!((x - y).abs() <= tol, "{what}: beta {:?} vs {:?}", a.beta, b.beta);
    }
    assert!((a.nu - b.nu).abs() <= tol * b.nu.max(1.0), "{what}: nu {} vs {}", a.nu, b.nu);
}

#[test]
fn balanced_gaussian_constant_fit_is_analytic() {
    let d = 0.5;
    let ys = [0.3, -1.2, 2.4, 0.9, 1.7, -0.4, 3.1, 0.0];
    let data: Vec<AreaRecord> = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| AreaRecord::sampled(i.to_string(), y, 1.0 / d, vec![1.0], [i as f64, 0.0]))
        .collect();
    let fit = fit_constant(Family::Gaussian, &data).unwrap();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let s2 = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
    assert!((fit.params.beta[0] - mean).abs() < 1e-9);
    let a = fit.params.random_effect_variance();
    assert!((a - (s2 - d).max(1e-8)).abs() < 1e-7, "A = {a}, want {}", s2 - d);

    // Spread below the sampling variance puts A on its floor.
    let tight: Vec<AreaRecord> = data.iter().map(|r| AreaRecord { y: r.y * 0.1, ..r.clone() }).collect();
    let fit = fit_constant(Family::Gaussian, &tight).unwrap();
    assert!(fit.params.random_effect_variance() <= 1e-8 * (1.0 + 1e-9));
    assert!(fit.diagnostics.at_nu_cap);
}

#[test]
fn uniform_weights_reduce_to_constant_fit() {
    for family in Family::ALL {
        let data = synthetic(family, 30, 20.0, 11, &varying_phi(family));
        let global = fit_constant(family, &data).unwrap().params;
        let sv = fit_all(family, &data, &flat_for(&data)).unwrap();
        for (k, fit) in sv.fits.iter().enumerate() {
            let tol = if family == Family::Gaussian { 1e-6 } else { 1e-5 };
            assert_params_close(&fit.as_ref().unwrap().params, &global, tol, &format!("{family} area {k}"));
        }
    }
}

#[test]
fn objective_never_decreases_from_start() {
    for family in Family::ALL {
        let data = synthetic(family, 25, 15.0, 5, &varying_phi(family));
        let cfg = KernelConfig::new(0.4).unwrap();
        let starts = [
            HyperParams::new(vec![0.0, 0.0], 1.0).unwrap(),
            HyperParams::new(vec![-1.0, 0.5], 200.0).unwrap(),
            HyperParams::new(vec![0.5, -0.5], 0.05).unwrap(),
        ];
        for i in [0, 7, 19] {
            for init in &starts {
                let before = local_loglik(family, init, i, &data, &cfg).unwrap();
                let fit = fit_local(family, i, &data, &cfg, init, &FitOptions::default()).unwrap();
                let after = local_loglik(family, &fit.params, i, &data, &cfg).unwrap();
                assert!(after >= before - 1e-9, "{family} area {i}: {after} < {before}");
                assert!((after - fit.diagnostics.objective).abs() <= 1e-9 * after.abs().max(1.0));
            }
        }
    }
}

#[test]
fn em_trace_is_monotone() {
    let opts = FitOptions {
        trace: true,
        polish: false,
        ..FitOptions::default()
    };
    for family in [Family::PoissonGamma, Family::BinomialBeta] {
        let data = synthetic(family, 30, 20.0, 8, &varying_phi(family));
        let cfg = KernelConfig::new(0.3).unwrap();
        let init = HyperParams::new(vec![0.0, 0.0], 2.0).unwrap();
        for i in [0, 10, 20] {
            let fit = fit_local(family, i, &data, &cfg, &init, &opts).unwrap();
            let t = &fit.diagnostics.trace;
            assert!(t.len() > 2);
            for w in t.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{family}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn constant_fit_ignores_duplication() {
    for family in Family::ALL {
        let data = synthetic(family, 20, 12.0, 21, &constant_phi(family));
        let doubled: Vec<AreaRecord> = data.iter().chain(&data).cloned().collect();
        let a = fit_constant(family, &data).unwrap().params;
        let b = fit_constant(family, &doubled).unwrap().params;
        assert_params_close(&a, &b, 1e-6, family.name());
    }
}

#[test]
fn area_order_does_not_matter() {
    for family in Family::ALL {
        let data = synthetic(family, 20, 15.0, 3, &varying_phi(family));
        let cfg = KernelConfig::new(0.5).unwrap();
        let sv = fit_all(family, &data, &cfg).unwrap();
        let mut perm: Vec<usize> = (0..data.len()).collect();
        perm.reverse();
        perm.swap(2, 9);
        let shuffled: Vec<AreaRecord> = perm.iter().map(|&i| data[i].clone()).collect();
        let sv2 = fit_all(family, &shuffled, &cfg).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            assert_params_close(sv2.params(new).unwrap(), sv.params(old).unwrap(), 1e-6, family.name());
        }
    }
}

#[test]
fn constant_truth_with_flat_kernel_gives_equal_local_fits() {
    for family in [Family::PoissonGamma, Family::BinomialBeta] {
        let data = synthetic(family, 60, 20.0, 17, &constant_phi(family));
        let sv = fit_all(family, &data, &flat_for(&data)).unwrap();
        let first = sv.params(0).unwrap().clone();
        for i in 1..60 {
            assert_params_close(sv.params(i).unwrap(), &first, 1e-5, family.name());
        }
    }
}

#[test]
fn varying_intercept_is_recovered_in_rank() {
    for family in [Family::PoissonGamma, Family::BinomialBeta] {
        let data = synthetic(family, 60, 20.0, 29, &varying_phi(family));
        let sv = fit_all(family, &data, &KernelConfig::new(0.25).unwrap()).unwrap();
        let est: Vec<f64> = (0..60).map(|i| sv.params(i).unwrap().beta[0]).collect();
        let truth: Vec<f64> = data.iter().map(|r| r.u[0] - r.u[1] - 1.0).collect();
        let rho = spearman(&est, &truth);
        assert!(rho > 0.5, "{family}: rank correlation {rho}");
    }
}

#[test]
fn large_sample_constant_fit_is_consistent() {
    let family = Family::PoissonGamma;
    let truth = HyperParams::new(vec![0.1, 0.7], 50.0).unwrap();
    let data = synthetic(family, 2000, 20.0, 99, &|_| truth.clone());
    let fit = fit_constant(family, &data).unwrap().params;
    // Monte-Carlo standard errors from 200 further datasets of the same size.
    let reps: Vec<HyperParams> = (0..40)
        .map(|s| fit_constant(family, &synthetic(family, 2000, 20.0, 1000 + s, &|_| truth.clone())).unwrap().params)
        .collect();
    let sd = |f: &dyn Fn(&HyperParams) -> f64| {
        let v: Vec<f64> = reps.iter().map(f).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    assert!((fit.beta[0] - 0.1).abs() < 3.0 * sd(&|p| p.beta[0]), "beta0 {}", fit.beta[0]);
    assert!((fit.beta[1] - 0.7).abs() < 3.0 * sd(&|p| p.beta[1]), "beta1 {}", fit.beta[1]);
    assert!((fit.nu.ln() - 50f64.ln()).abs() < 3.0 * sd(&|p| p.nu.ln()), "nu {}", fit.nu);
}

#[test]
fn leave_one_out_paths_agree() {
    for family in Family::ALL {
        let data = synthetic(family, 20, 15.0, 41, &varying_phi(family));
        let cfg = KernelConfig::new(0.6).unwrap();
        let opts = FitOptions::default();
        for j in [0, 5, 13] {
            let loo = fit_local_loo(family, j, &data, &cfg).unwrap();
            let without: Vec<AreaRecord> = data.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, r)| r.clone()).collect();
            let direct = fit_at(family, &without, data[j].u, None, &cfg, None, &opts).unwrap();
            assert_eq!(loo.params, direct.params, "{family} area {j}");

            // A twin at the same place: dropping j leaves the twin, so the
            // LOO fit equals the plain fit on data without j.
            let mut twin = data.clone();
            let mut copy = data[j].clone();
            copy.id.push('b');
            twin.push(copy);
            let init = fit_constant(family, &data).unwrap().params;
            let a = fit_local_loo_with(family, j, &twin, &cfg, Some(&init), &opts).unwrap();
            let b = fit_local(family, j, &data, &cfg, &init, &opts).unwrap();
            assert_params_close(&a.params, &b.params, 1e-8, family.name());
        }
    }
}

#[test]
fn remote_area_has_no_influence() {
    for family in Family::ALL {
        let mut data = synthetic(family, 20, 15.0, 51, &varying_phi(family));
        data[19].u = [40.0, 40.0];
        let cfg = KernelConfig::new(0.5).unwrap();
        let a = fit_all(family, &data, &cfg).unwrap();
        data[19].u = [80.0, 80.0];
        let b = fit_all(family, &data, &cfg).unwrap();
        for i in 0..19 {
            assert_params_close(a.params(i).unwrap(), b.params(i).unwrap(), 1e-3, family.name());
        }
    }
}

/// Best value of the local objective over a 60³ grid in (β₀, β₁, log ν).
fn grid_best(objective: &dyn Fn(&HyperParams) -> f64, centre: &HyperParams, half: [f64; 3]) -> f64 {
    let n = 60;
    let mut best = f64::NEG_INFINITY;
    let tau0 = centre.nu.ln();
    for a in 0..n {
        let b0 = centre.beta[0] - half[0] + 2.0 * half[0] * a as f64 / (n - 1) as f64;
        for b in 0..n {
            let b1 = centre.beta[1] - half[1] + 2.0 * half[1] * b as f64 / (n - 1) as f64;
            for c in 0..n {
                let tau = (tau0 - half[2] + 2.0 * half[2] * c as f64 / (n - 1) as f64).clamp(-18.0, 18.0);
                let v = objective(&HyperParams { beta: vec![b0, b1], nu: tau.exp() });
                if v > best {
                    best = v;
                }
            }
        }
    }
    best
}

#[test]
fn local_fits_beat_grid_search() {
    let mut rng = Stream::new(77);
    for family in Family::ALL {
        for case in 0..3 {
            let m = 5 + case % 2;
            let data = synthetic(family, m, 10.0 + 5.0 * case as f64, rng.next_u64(), &varying_phi(family));
            let cfg = KernelConfig::new(0.8 + 0.8 * case as f64).unwrap();
            let i = case % m;
            let init = HyperParams::new(vec![0.0, 0.0], 5.0).unwrap();
            let fit = fit_local(family, i, &data, &cfg, &init, &FitOptions::default()).unwrap();
            let obj = |phi: &HyperParams| local_loglik(family, phi, i, &data, &cfg).unwrap();
            let got = obj(&fit.params);
            // A wide grid around the origin and a fine one around the fit.
            let wide = grid_best(&obj, &HyperParams { beta: vec![0.0, 0.0], nu: 10.0 }, [4.0, 4.0, 9.0]);
            let fine = grid_best(&obj, &fit.params, [0.05, 0.05, 0.2]);
            let slack = 1e-9 * got.abs().max(1.0);
            assert!(got >= wide - slack, "{family} case {case}: {got} < wide grid {wide}");
            assert!(got >= fine - slack, "{family} case {case}: {got} < fine grid {fine}");
        }
    }
}
