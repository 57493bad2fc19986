//! Log-domain likelihood kernels for the binomial, `M0`, `Mh` and Dirichlet-multinomial models.
//!
//! A value of `-inf` is an ordinary result meaning "probability zero"; it is
//! returned for support violations (such as `N < M`) so grid scans and
//! optimizers can step over them without error handling.

use serde::{Deserialize, Serialize};

use crate::capture_data::SufficientStats;
use crate::error::{Error, Result};
use crate::special::{
    ln_beta, ln_choose, ln_factorial, ln_falling, ln_gamma, ln_rising, xlog1my, xlogy,
};

/// Consecutive decreasing profile steps after which the `M0` MLE scan stops.
pub const MLE_WINDOW: u64 = 20;
/// Hard cap on the number of `N` values the profile scan visits.
pub const MLE_SCAN_LIMIT: u64 = 100_000_000;

/// Shapes of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            Ok(Self { a, b })
        } else {
            Err(Error::InvalidArgument(format!(
                "Beta shapes must be positive and finite, got a={a}, b={b}"
            )))
        }
    }

    pub fn uniform() -> Self {
        Self { a: 1.0, b: 1.0 }
    }
}

/// Beta(`alpha`, `beta`) population from which individual detection probabilities are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityParams {
    pub alpha: f64,
    pub beta: f64,
}

impl HeterogeneityParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
            Ok(Self { alpha, beta })
        } else {
            Err(Error::InvalidArgument(format!(
                "heterogeneity shapes must be positive and finite, got alpha={alpha}, beta={beta}"
            )))
        }
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "probability must lie in [0, 1], got {p}"
        )))
    }
}

/// `ln p^s (1-p)^f` with `0^0 = 1`.
fn ln_bernoulli_powers(p: f64, successes: f64, failures: f64) -> f64 {
    xlogy(successes, p) + xlog1my(failures, p)
}

/// Log-probability of per-occasion counts when each count is an independent Binomial(`N`, `p`).
///
/// Includes all `K` binomial coefficients.
pub fn kahn_log_prob(n_j: &[u64], n: u64, p: f64) -> Result<f64> {
    check_probability(p)?;
    let max = n_j.iter().copied().max().unwrap_or(0);
    if n < max {
        return Err(Error::InvalidArgument(format!(
            "N = {n} is smaller than the largest occasion count {max}"
        )));
    }
    let k = n_j.len() as f64;
    let n_dot: u64 = n_j.iter().sum();
    let combinatorial: f64 = n_j.iter().map(|&c| ln_choose(n, c)).sum();
    let total = k * n as f64;
    Ok(combinatorial + ln_bernoulli_powers(p, n_dot as f64, total - n_dot as f64))
}

/// `M0` complete-history log-probability
/// `ln[ N!/((N-M)! M!) p^{n.} (1-p)^{KN-n.} ]`.
///
/// Returns `-inf` when `N < M` or when `p` sits on a boundary the data rule out.
pub fn m0_log_prob(stats: &SufficientStats, n: u64, p: f64) -> Result<f64> {
    check_probability(p)?;
    if n < stats.m {
        return Ok(f64::NEG_INFINITY);
    }
    let trials = (stats.k * n) as f64;
    let n_dot = stats.n_dot as f64;
    Ok(ln_choose(n, stats.m) + ln_bernoulli_powers(p, n_dot, trials - n_dot))
}

/// Profile log-likelihood of `M0` at `N` with `p` replaced by `n./(KN)`.
pub fn m0_profile_log_lik(stats: &SufficientStats, n: u64) -> f64 {
    if n < stats.m || n == 0 {
        return f64::NEG_INFINITY;
    }
    let p_hat = stats.n_dot as f64 / (stats.k * n) as f64;
    m0_log_prob(stats, n, p_hat).unwrap_or(f64::NEG_INFINITY)
}

/// Maximum likelihood estimate `(N_hat, p_hat)` for `M0`.
///
/// Scans `N = M, M+1, ...` on the profile likelihood and stops once the
/// profile has decreased for [`MLE_WINDOW`] consecutive steps.
pub fn m0_profile_mle(stats: &SufficientStats) -> Result<(u64, f64)> {
    if stats.n_dot <= stats.m {
        return Err(Error::NoFiniteMle(
            "no recaptures (r = 0): the profile likelihood increases without bound in N".into(),
        ));
    }
    let start = stats.m;
    let mut best_n = start;
    let mut best = m0_profile_log_lik(stats, start);
    let mut prev = best;
    let mut decreasing = 0u64;
    let mut n = start;
    while decreasing < MLE_WINDOW {
        n += 1;
        if n - start > MLE_SCAN_LIMIT {
            return Err(Error::NoFiniteMle(format!(
                "profile likelihood still rising after {MLE_SCAN_LIMIT} steps"
            )));
        }
        let value = m0_profile_log_lik(stats, n);
        if value > best {
            best = value;
            best_n = n;
        }
        if value < prev {
            decreasing += 1;
        } else {
            decreasing = 0;
        }
        prev = value;
    }
    let p_hat = stats.n_dot as f64 / (stats.k * best_n) as f64;
    Ok((best_n, p_hat))
}

/// `ln Π_{j<K} (β+j)/(α+β+j)`: log-probability that an individual is never caught.
pub fn ln_zero_cell(k: u64, params: HeterogeneityParams) -> f64 {
    ln_rising(params.beta, k) - ln_rising(params.alpha + params.beta, k)
}

/// Log-probability of an individual's `K`-occasion history with `y` captures,
/// integrated over `p ~ Beta(α, β)`.
pub fn ln_individual_history(y: u64, k: u64, params: HeterogeneityParams) -> f64 {
    ln_rising(params.alpha, y) + ln_rising(params.beta, k - y)
        - ln_rising(params.alpha + params.beta, k)
}

/// `Mh` complete-data log-likelihood with the individual detection
/// probabilities integrated out against Beta(`α`, `β`).
///
/// Returns `-inf` for `N < M`.
pub fn mh_integrated_log_prob(stats: &SufficientStats, n: u64, params: HeterogeneityParams) -> f64 {
    if n < stats.m {
        return f64::NEG_INFINITY;
    }
    let k = stats.k;
    let observed: f64 = stats
        .y_i_dot
        .iter()
        .map(|&y| ln_individual_history(y, k, params))
        .sum();
    ln_choose(n, stats.m) + (n - stats.m) as f64 * ln_zero_cell(k, params) + observed
}

/// Beta-binomial cell probabilities `π_j`, `j = 0..=K`, in log form.
pub fn ln_beta_binomial_cells(k: u64, params: HeterogeneityParams) -> Vec<f64> {
    let lb = ln_beta(params.alpha, params.beta);
    (0..=k)
        .map(|j| {
            ln_choose(k, j) + ln_beta(j as f64 + params.alpha, (k - j) as f64 + params.beta) - lb
        })
        .collect()
}

/// `Mh` summary likelihood in terms of capture frequencies:
/// `N! / (Π f_j! (N-M)!) π_0^{N-M} Π π_j^{f_j}` with beta-binomial cells.
///
/// `f_j[j-1]` counts individuals caught exactly `j` times. Returns `-inf` for `N < M`.
pub fn mh_summary_log_prob(
    f_j: &[u64],
    m: u64,
    n: u64,
    k: u64,
    params: HeterogeneityParams,
) -> Result<f64> {
    if f_j.len() as u64 != k {
        return Err(Error::Validation(format!(
            "expected {k} frequency counts, got {}",
            f_j.len()
        )));
    }
    if f_j.iter().sum::<u64>() != m {
        return Err(Error::Validation("frequency counts must sum to M".into()));
    }
    if n < m {
        return Ok(f64::NEG_INFINITY);
    }
    let cells = ln_beta_binomial_cells(k, params);
    let multinomial =
        ln_factorial(n) - ln_factorial(n - m) - f_j.iter().map(|&f| ln_factorial(f)).sum::<f64>();
    let observed: f64 = f_j
        .iter()
        .enumerate()
        .filter(|(_, &f)| f > 0)
        .map(|(j, &f)| f as f64 * cells[j + 1])
        .sum();
    Ok(multinomial + (n - m) as f64 * cells[0] + observed)
}

/// Dirichlet-multinomial posterior kernel over `N` (prior on `N` excluded):
/// `ln[ Γ(N+1)/Γ(N-n+1) · Γ(N-n+δ)/Γ(N+kδ) ]`.
///
/// Returns `-inf` for `N < n`.
pub fn york_madigan_log_kernel(n_total: u64, n_obs: u64, k: u64, delta: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "number of cells k must be >= 2, got {k}"
        )));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if n_total < n_obs {
        return Ok(f64::NEG_INFINITY);
    }
    let unseen = (n_total - n_obs) as f64;
    let n = n_total as f64;
    Ok(ln_falling(n_total, n_obs) + ln_gamma(unseen + delta) - ln_gamma(n + k as f64 * delta))
}
