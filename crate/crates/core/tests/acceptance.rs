//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

mod common;

use std::time::Instant;

use rayon::prelude::*;

use recapture::capture_data::{simulate_m0, simulate_mh};
use recapture::da_mcmc::{da_gibbs, exact_grid_posterior, m_sweep, total_variation, DaConfig};
use recapture::likelihoods::{
    m0_profile_log_lik, m0_profile_mle, mh_integrated_log_prob, mh_summary_log_prob, BetaParams,
    HeterogeneityParams,
};
use recapture::posterior::{m0_marginal_log_kernel, MhMarginal};
use recapture::propriety::{
    gamma_ratio_asymptotic_check, geometric_grid, propriety_report, FitConfig, ModelInput,
};
use recapture::{CaptureHistory, GammaPrior, NPrior, PosteriorTable, Verdict};

use common::{m0_kernel_by_quadrature, stats_from_counts};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fit_range() -> FitConfig {
    FitConfig {
        lo: Some(1_000),
        hi: Some(1_000_000),
        ..FitConfig::default()
    }
}

/// Three observed individuals over five occasions with `r` recaptures.
fn three_animals(r: u64) -> Vec<u64> {
    let mut counts = vec![1u64; 3];
    for i in 0..r as usize {
        counts[i % 3] += 1;
    }
    counts
}

fn m0_fit(counts: &[u64], a: f64, prior: NPrior) -> (f64, Verdict) {
    let stats = stats_from_counts(5, counts);
    let beta = BetaParams::new(a, 1.0).unwrap();
    let report = propriety_report(&ModelInput::M0 { stats, beta }, prior, &fit_range()).unwrap();
    (report.fitted_exponent.unwrap_or(f64::NAN), report.predicted)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (d, _) = m0_fit(&[3, 1, 1], 1.0, NPrior::Uniform);
    let single = start.elapsed().as_secs_f64();
    let mut worst: f64 = (d - 3.0).abs();
    for r in [0u64, 1, 2, 5] {
        for a in [0.5, 1.0, 2.0] {
            let (fitted, _) = m0_fit(&three_animals(r), a, NPrior::Uniform);
            worst = worst.max((fitted - (r as f64 + a)).abs());
        }
    }
    outcome(
        (d - 3.0).abs() <= 0.05 && worst <= 0.05 && single < 1.0,
        format!("fitted {d:.4} (target 3), worst grid error {worst:.2e}, runtime {single:.3}s"),
    )
}

fn criterion_2() -> Outcome {
    let counts = three_animals(0);
    let (du, vu) = m0_fit(&counts, 1.0, NPrior::Uniform);
    let (ds, vs) = m0_fit(&counts, 1.0, NPrior::Scale);
    let pass =
        (du - 1.0).abs() <= 0.02 && !vu.is_proper() && (ds - 2.0).abs() <= 0.02 && vs.is_proper();
    outcome(
        pass,
        format!("uniform {du:.4} ({vu}), scale {ds:.4} ({vs})"),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut datasets = 0;
    for seed in 0..20u64 {
        let p = 0.1 + 0.04 * seed as f64;
        let data = simulate_m0(20 + 3 * seed, p, 3 + (seed % 5) as usize, 1_000 + seed).unwrap();
        let stats = data.summarize();
        let beta = BetaParams::new(0.5 + 0.1 * seed as f64, 1.0 + 0.05 * seed as f64).unwrap();
        let local = (stats.m..=10_000)
            .into_par_iter()
            .map(|n| {
                let closed = m0_marginal_log_kernel(n, &stats, beta);
                let quad = m0_kernel_by_quadrature(&stats, n, beta);
                (quad - closed).exp_m1().abs()
            })
            .reduce(|| 0.0, f64::max);
        worst = worst.max(local);
        datasets += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-8 && secs < 10.0 && datasets == 20,
        format!("{datasets} datasets, worst relative error {worst:.2e}, runtime {secs:.2}s"),
    )
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for seed in 0..40u64 {
        let k = 2 + (seed % 3) as usize;
        let data = simulate_mh(6, 1.2, 1.8, k, seed).unwrap();
        if data.observed() == 0 || data.observed() > 5 {
            continue;
        }
        let stats = data.summarize();
        for &(alpha, beta) in &[(0.5, 0.5), (1.0, 2.0), (2.5, 1.5)] {
            let params = HeterogeneityParams::new(alpha, beta).unwrap();
            let freq: Vec<f64> = (stats.m..=500)
                .map(|n| mh_summary_log_prob(&stats.f_j, stats.m, n, stats.k, params).unwrap())
                .collect();
            let full: Vec<f64> = (stats.m..=500)
                .map(|n| mh_integrated_log_prob(&stats, n, params))
                .collect();
            let a = PosteriorTable::from_log_kernel(freq, NPrior::Uniform, stats.m, 0.95).unwrap();
            let b = PosteriorTable::from_log_kernel(full, NPrior::Uniform, stats.m, 0.95).unwrap();
            let d = a
                .mass
                .iter()
                .zip(&b.mass)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            worst = worst.max(d);
            cases += 1;
        }
    }
    outcome(
        worst < 1e-8 && cases >= 30,
        format!("{cases} cases, worst pointwise difference {worst:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let stats = stats_from_counts(5, &[3, 1, 1]);
    let mut lines = Vec::new();
    let mut pass = true;
    for a in [0.5, 1.5, 3.0] {
        for b in [1.0, 2.0] {
            let prior = GammaPrior::new(a, b, 1.0).unwrap();
            let report = propriety_report(
                &ModelInput::Mh {
                    stats: stats.clone(),
                    prior,
                },
                NPrior::Uniform,
                &fit_range(),
            )
            .unwrap();
            let mh = MhMarginal::new(&stats, prior).unwrap();
            let conv = geometric_grid(1_000, 1_000_000, 12)
                .into_par_iter()
                .map(|n| mh.check(n).rel_change)
                .reduce(|| 0.0, f64::max);
            let fitted = report.fitted_exponent.unwrap_or(f64::NAN);
            let ok = fitted >= a - 0.05 && conv < 1e-6;
            pass &= ok;
            lines.push(format!("a={a},b={b}: {fitted:.3} (conv {conv:.1e})"));
        }
    }
    outcome(pass, lines.join("; "))
}

fn criterion_6() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for (k, delta, expected) in [(2u64, 1.0, false), (6, 0.25, true), (6, 0.2, false)] {
        let report = propriety_report(
            &ModelInput::YorkMadigan { n_obs: 4, k, delta },
            NPrior::Uniform,
            &fit_range(),
        )
        .unwrap();
        let target = (k - 1) as f64 * delta;
        let fitted = report.fitted_exponent.unwrap_or(f64::NAN);
        let ok = (fitted - target).abs() <= 0.02 && report.predicted.is_proper() == expected;
        pass &= ok;
        lines.push(format!(
            "k={k},delta={delta}: {fitted:.4} vs {target} ({})",
            report.predicted
        ));
    }
    outcome(pass, lines.join("; "))
}

fn criterion_7() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 1..=10 {
        for j in 1..=10 {
            let (a, b) = (0.5 * i as f64, 0.5 * j as f64);
            worst = worst.max(gamma_ratio_asymptotic_check(1e6, a, b));
        }
    }
    outcome(
        worst < 1e-3,
        format!("worst |ratio - 1| = {worst:.2e} over a, b in (0, 5]"),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let data = simulate_m0(50, 0.4, 5, 8).unwrap();
    let stats = data.summarize();
    let m = 500;
    let chains = da_gibbs(&data, &DaConfig::new(m, 101_000, 1_000, 8)).unwrap();
    let exact = exact_grid_posterior(&stats, m, BetaParams::uniform()).unwrap();
    let tv = total_variation(&chains, &exact);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        tv < 0.02 && chains.n.len() == 100_000 && secs < 60.0,
        format!(
            "TV {tv:.4} with {} draws, runtime {secs:.2}s",
            chains.n.len()
        ),
    )
}

fn criterion_9() -> Outcome {
    let ms = [200u64, 500, 1000];
    let base = DaConfig::new(0, 101_000, 1_000, 9);
    let no_recaptures = CaptureHistory::from_capture_counts(5, &[1; 20]).unwrap();
    let flat = m_sweep(&no_recaptures, &ms, &base).unwrap();
    let informed = simulate_m0(50, 0.4, 5, 10).unwrap();
    let r = informed.summarize().recaptures();
    let stable = m_sweep(&informed, &ms, &base).unwrap();
    let means = |s: &recapture::da_mcmc::SweepReport| {
        s.entries
            .iter()
            .map(|e| format!("{:.1}", e.mean_n))
            .collect::<Vec<_>>()
            .join("/")
    };
    let pass =
        flat.strictly_increasing && flat.slope_z > 3.0 && r >= 5 && stable.relative_change < 0.05;
    outcome(
        pass,
        format!(
            "r=0 means {} (slope z {:.1}, sd ratio {:.2}); r={r} means {} (change {:.2}%)",
            means(&flat),
            flat.slope_z,
            flat.sd_ratio,
            means(&stable),
            100.0 * stable.relative_change
        ),
    )
}

fn criterion_10() -> Outcome {
    let data = CaptureHistory::new(2, vec![vec![1, 0], vec![1, 1]]).unwrap();
    let stats = data.summarize();
    let (n_hat, p_hat) = m0_profile_mle(&stats).unwrap();
    let brute = (2..=100u64)
        .max_by(|&x, &y| m0_profile_log_lik(&stats, x).total_cmp(&m0_profile_log_lik(&stats, y)))
        .unwrap();
    outcome(
        n_hat == 2 && (p_hat - 0.75).abs() < 1e-12 && brute == n_hat,
        format!("N_hat {n_hat}, p_hat {p_hat}, enumeration argmax {brute}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("M0 tail exponent equals r + a", criterion_1),
        ("impropriety detection, both priors", criterion_2),
        ("M0 closed form vs quadrature", criterion_3),
        ("Mh frequency vs complete-data posteriors", criterion_4),
        ("Mh tail exponent bound", criterion_5),
        ("Dirichlet-multinomial exponent and verdicts", criterion_6),
        ("gamma-ratio asymptotics", criterion_7),
        ("data augmentation vs exact grid", criterion_8),
        ("augmentation-size sweep", criterion_9),
        ("profile MLE", criterion_10),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = run();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failures += 1;
        }
        println!("criterion {:>2} [{tag}] {name}: {}", i + 1, result.detail);
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
