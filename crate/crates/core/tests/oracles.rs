mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use recapture::capture_data::{simulate_m0, simulate_mh};
use recapture::likelihoods::{
    ln_individual_history, ln_zero_cell, mh_integrated_log_prob, mh_summary_log_prob, BetaParams,
    HeterogeneityParams,
};
use recapture::posterior::{beta_expectation, m0_marginal_log_kernel, MhMarginal};
use recapture::special::ln_choose;
use recapture::{GammaPrior, NPrior, PosteriorTable};

use common::{integrate, ln_beta_integral, m0_kernel_by_quadrature, stats_from_counts};

#[test]
fn m0_closed_form_matches_quadrature_on_random_datasets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..6 {
        let n_true = rng.gen_range(5..60);
        let p = rng.gen_range(0.05..0.6);
        let k = rng.gen_range(2..8);
        let data = simulate_m0(n_true, p, k, rng.gen()).unwrap();
        if data.observed() == 0 {
            continue;
        }
        let stats = data.summarize();
        let beta = BetaParams::new(rng.gen_range(0.5..3.0), rng.gen_range(1.0..3.0)).unwrap();
        let worst = (stats.m..=2_000)
            .into_par_iter()
            .map(|n| {
                let closed = m0_marginal_log_kernel(n, &stats, beta);
                let quad = m0_kernel_by_quadrature(&stats, n, beta);
                (quad - closed).exp_m1().abs()
            })
            .reduce(|| 0.0, f64::max);
        assert!(worst < 1e-8, "case {case}: worst relative error {worst:e}");
    }
}

#[test]
fn mh_complete_data_matches_per_individual_quadrature() {
    let counts = [1, 1, 2, 3, 1, 4];
    let stats = stats_from_counts(4, &counts);
    for &(alpha, beta) in &[(1.0, 1.0), (1.5, 3.0), (2.5, 1.2)] {
        let params = HeterogeneityParams::new(alpha, beta).unwrap();
        let ln_b = recapture::special::ln_beta(alpha, beta);
        let cell = |y: u64| {
            ln_beta_integral(y as f64 + alpha - 1.0, (4 - y) as f64 + beta - 1.0, 1e-15) - ln_b
        };
        for y in 0..=4 {
            let err = (cell(y) - ln_individual_history(y, 4, params)).abs();
            assert!(err < 1e-12, "y={y}: {err:e}");
        }
        for n in [6u64, 10, 25, 50] {
            let direct = ln_choose(n, stats.m)
                + (n - stats.m) as f64 * cell(0)
                + counts.iter().map(|&y| cell(y)).sum::<f64>();
            let closed = mh_integrated_log_prob(&stats, n, params);
            let rel = (direct - closed).exp_m1().abs();
            assert!(rel < 1e-10, "alpha={alpha} beta={beta} N={n}: {rel:e}");
        }
        assert!((ln_zero_cell(4, params) - cell(0)).abs() < 1e-12);
    }
}

#[test]
fn mh_frequency_and_complete_data_posteriors_agree() {
    for seed in 0..8u64 {
        let data = simulate_mh(8, 1.0, 2.0, 2 + (seed % 3) as usize, seed).unwrap();
        if data.observed() == 0 || data.observed() > 5 {
            continue;
        }
        let stats = data.summarize();
        for &(alpha, beta) in &[(0.7, 1.3), (2.0, 2.0), (3.0, 0.8)] {
            let params = HeterogeneityParams::new(alpha, beta).unwrap();
            let eq_freq: Vec<f64> = (stats.m..=500)
                .map(|n| mh_summary_log_prob(&stats.f_j, stats.m, n, stats.k, params).unwrap())
                .collect();
            let eq_full: Vec<f64> = (stats.m..=500)
                .map(|n| mh_integrated_log_prob(&stats, n, params))
                .collect();
            let a =
                PosteriorTable::from_log_kernel(eq_freq, NPrior::Uniform, stats.m, 0.95).unwrap();
            let b =
                PosteriorTable::from_log_kernel(eq_full, NPrior::Uniform, stats.m, 0.95).unwrap();
            let worst = a
                .mass
                .iter()
                .zip(&b.mass)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-8, "seed {seed}: {worst:e}");
        }
    }
}

#[test]
fn beta_expectation_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let draws = 1_000_000;
    for &(n, m, a, b) in &[(5u64, 2u64, 1.0, 1.0), (20, 3, 0.5, 2.0), (12, 0, 2.0, 1.5)] {
        let dist = rand_distr::Beta::new(a, b).unwrap();
        let values: Vec<f64> = (0..draws)
            .map(|_| {
                let x: f64 = dist.sample(&mut rng);
                x.powi(m as i32) * (1.0 - x).powi((n - m) as i32)
            })
            .collect();
        let mean = values.iter().sum::<f64>() / draws as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        let exact = beta_expectation(n, m, a, b);
        assert!(
            (mean - exact).abs() < 5.0 * se,
            "({n},{m},{a},{b}): {mean} vs {exact} (se {se:e})"
        );
    }
}

#[test]
fn mh_marginal_matches_monte_carlo_over_shapes() {
    let stats = stats_from_counts(4, &[1, 2, 1, 3]);
    let prior = GammaPrior::new(1.5, 2.0, 1.0).unwrap();
    let marginal = MhMarginal::new(&stats, prior).unwrap();
    let ga = Gamma::new(prior.a, prior.c).unwrap();
    let gb = Gamma::new(prior.b, prior.c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 1_000_000;
    let shapes: Vec<(f64, f64)> = (0..draws)
        .map(|_| (ga.sample(&mut rng), gb.sample(&mut rng)))
        .collect();
    for n in [4u64, 8, 30] {
        let values: Vec<f64> = shapes
            .par_iter()
            .map(|&(alpha, beta)| {
                let params = HeterogeneityParams { alpha, beta };
                mh_integrated_log_prob(&stats, n, params).exp()
            })
            .collect();
        let mean = values.iter().sum::<f64>() / draws as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        let quad = marginal.log_kernel(n).exp();
        assert!(
            (mean - quad).abs() < 5.0 * se,
            "N={n}: MC {mean:e} vs quadrature {quad:e} (se {se:e})"
        );
    }
}

#[test]
fn mh_marginal_matches_nested_quadrature() {
    let stats = stats_from_counts(3, &[1, 3, 2]);
    let prior = GammaPrior::new(2.0, 1.5, 0.8).unwrap();
    let marginal = MhMarginal::new(&stats, prior).unwrap();
    let ln_norm = -(recapture::special::ln_gamma(prior.a) + prior.a * prior.c.ln())
        - (recapture::special::ln_gamma(prior.b) + prior.b * prior.c.ln());
    for n in [3u64, 7, 40] {
        let inner = |alpha: f64| {
            integrate(
                |beta: f64| {
                    let params = HeterogeneityParams { alpha, beta };
                    let lp = mh_integrated_log_prob(&stats, n, params)
                        + (prior.a - 1.0) * alpha.ln()
                        + (prior.b - 1.0) * beta.ln()
                        - (alpha + beta) / prior.c
                        + ln_norm;
                    lp.exp()
                },
                &[1e-12, 0.5, 2.0, 8.0, 40.0, 120.0],
                1e-11,
            )
        };
        let value = integrate(inner, &[1e-12, 0.5, 2.0, 8.0, 40.0, 120.0], 1e-10);
        let check = marginal.check(n);
        let rel = (value.ln() - check.coarse).exp_m1().abs();
        assert!(rel < 1e-8, "N={n}: {rel:e}");
        assert!(
            check.rel_change < 1e-8,
            "N={n}: reported {:e}",
            check.rel_change
        );
    }
}
