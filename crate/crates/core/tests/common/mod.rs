//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use recapture::likelihoods::BetaParams;
use recapture::special::{ln_choose, ln_factorial, ln_gamma};
use recapture::SufficientStats;

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = K15_WEIGHTS[7] * fc;
    let mut gauss = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = half * GK_NODES[i];
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += K15_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) over `[breaks[0], breaks[last]]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breaks: &[f64], rel_tol: f64) -> f64 {
    let mut parts: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(&f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    for _ in 0..5_000 {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() {
            break;
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (a, b, _, _) = parts.swap_remove(worst);
        let m = 0.5 * (a + b);
        let (v1, e1) = gk15(&f, a, m);
        let (v2, e2) = gk15(&f, m, b);
        parts.push((a, m, v1, e1));
        parts.push((m, b, v2, e2));
    }
    parts.iter().map(|p| p.2).sum()
}

/// `ln ∫ p^u (1-p)^v dp` by quadrature around the mode; `u, v >= 0`.
pub fn ln_beta_integral(u: f64, v: f64, rel_tol: f64) -> f64 {
    let mode = if u + v > 0.0 { u / (u + v) } else { 0.5 };
    let log_f = |p: f64| {
        let lp = if u == 0.0 { 0.0 } else { u * p.ln() };
        let lq = if v == 0.0 { 0.0 } else { v * (-p).ln_1p() };
        lp + lq
    };
    let peak = log_f(mode.clamp(1e-300, 1.0 - 1e-16));
    let width = (mode * (1.0 - mode) / (u + v + 1.0)).sqrt().max(1e-300);
    let mut breaks = vec![0.0, 1.0];
    for s in [-30.0, -8.0, -2.0, 0.0, 2.0, 8.0, 30.0] {
        let x = mode + s * width;
        if x > 0.0 && x < 1.0 {
            breaks.push(x);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let value = integrate(|p| (log_f(p) - peak).exp(), &breaks, rel_tol);
    peak + value.ln()
}

/// `M0` marginal log kernel from a quadrature over `p`, with the constant
/// `Γ(n.+a) / (M! B(a,b))` removed so it matches the closed form.
pub fn m0_kernel_by_quadrature(stats: &SufficientStats, n: u64, beta: BetaParams) -> f64 {
    let n_dot = stats.n_dot as f64;
    let trials = (stats.k * n) as f64;
    let u = n_dot + beta.a - 1.0;
    let v = trials - n_dot + beta.b - 1.0;
    ln_choose(n, stats.m) + ln_beta_integral(u, v, 1e-13) - ln_gamma(n_dot + beta.a)
        + ln_factorial(stats.m)
}

/// Total-variation distance between two probability vectors on a common grid.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn stats_from_counts(k: usize, counts: &[u64]) -> SufficientStats {
    recapture::CaptureHistory::from_capture_counts(k, counts)
        .unwrap()
        .summarize()
}
