//! Marginal posterior kernels of the population size `N` and their normalized tables.
//!
//! Detection parameters are integrated out in closed form for `M0` (Beta
//! prior on `p`) and by tensor-product Gauss–Laguerre quadrature for `Mh`
//! (independent Gamma priors on the Beta shapes). Tables live on a truncated
//! support `[N_min, N_max]`; the mass beyond `N_max` is extrapolated from a
//! power law fitted to the last decade of the support.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capture_data::SufficientStats;
use crate::error::{Error, Result};
use crate::likelihoods::BetaParams;
use crate::quadrature::GammaRule;
use crate::special::{ln_beta, ln_choose, ln_falling, ln_gamma, LogSumExp};

/// Default tensor-product order for the `Mh` expectation.
pub const DEFAULT_QUAD_ORDER: usize = 64;
/// Order of the refinement used to check the default rule.
pub const CHECK_QUAD_ORDER: usize = 96;
/// Largest accepted relative change between the default and refined rules.
pub const DEFAULT_QUAD_TOL: f64 = 1e-6;
/// Default credible level for equal-tail intervals.
pub const DEFAULT_LEVEL: f64 = 0.95;
/// Tail exponents at or below `1 + TAIL_MARGIN` trigger the impropriety warning.
pub const TAIL_MARGIN: f64 = 0.05;
const TAIL_FIT_POINTS: usize = 50;

/// Prior on `N` over the non-negative integers; both choices are improper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NPrior {
    /// `π(N) ∝ 1`
    Uniform,
    /// `π(N) ∝ 1/N`
    Scale,
}

impl NPrior {
    pub fn ln_weight(self, n: u64) -> f64 {
        match self {
            NPrior::Uniform => 0.0,
            NPrior::Scale => -(n as f64).ln(),
        }
    }

    /// Amount the prior adds to a kernel's tail exponent.
    pub fn exponent_shift(self) -> f64 {
        match self {
            NPrior::Uniform => 0.0,
            NPrior::Scale => 1.0,
        }
    }

    /// First support point: `M`, or `max(M, 1)` for the scale prior, which is undefined at zero.
    pub fn support_start(self, m: u64) -> u64 {
        match self {
            NPrior::Uniform => m,
            NPrior::Scale => m.max(1),
        }
    }
}

impl std::fmt::Display for NPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NPrior::Uniform => "uniform",
            NPrior::Scale => "scale",
        })
    }
}

impl std::str::FromStr for NPrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(NPrior::Uniform),
            "scale" => Ok(NPrior::Scale),
            other => Err(Error::InvalidArgument(format!(
                "unknown prior {other:?}, expected uniform or scale"
            ))),
        }
    }
}

/// Independent `Gamma(a, c)` and `Gamma(b, c)` priors (shape, common scale) on the Beta shapes `α`, `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl GammaPrior {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if [a, b, c].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(Self { a, b, c })
        } else {
            Err(Error::InvalidArgument(format!(
                "Gamma shapes and scale must be positive, got a={a}, b={b}, c={c}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DetectionPrior {
    /// Beta prior on the common detection probability (`M0`).
    Beta(BetaParams),
    /// Gamma priors on the heterogeneity shapes (`Mh`).
    Gamma(GammaPrior),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub n_prior: NPrior,
    pub detection: DetectionPrior,
}

/// `M0` kernel after integrating `p` against Beta(`a`, `b`):
/// `ln[ N!/(N-M)! · Γ(KN - n. + b) / Γ(KN + a + b) ]`.
///
/// The prior on `N` is not included. Returns `-inf` for `N < M`.
pub fn m0_marginal_log_kernel(n: u64, stats: &SufficientStats, beta: BetaParams) -> f64 {
    if n < stats.m {
        return f64::NEG_INFINITY;
    }
    let trials = (stats.k * n) as f64;
    let failures = trials - stats.n_dot as f64;
    ln_falling(n, stats.m) + ln_gamma(failures + beta.b) - ln_gamma(trials + beta.a + beta.b)
}

/// `ln E[(1-X)^{N-M} X^M]` for `X ~ Beta(a, b)`.
pub fn ln_beta_expectation(n: u64, m: u64, a: f64, b: f64) -> f64 {
    if n < m {
        return f64::NEG_INFINITY;
    }
    ln_beta(m as f64 + a, (n - m) as f64 + b) - ln_beta(a, b)
}

pub fn beta_expectation(n: u64, m: u64, a: f64, b: f64) -> f64 {
    ln_beta_expectation(n, m, a, b).exp()
}

/// Default and refined evaluations of the `Mh` kernel at one `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureCheck {
    pub n: u64,
    pub coarse_order: usize,
    pub fine_order: usize,
    pub coarse: f64,
    pub fine: f64,
    /// `|exp(fine - coarse) - 1|`, relative change of the kernel value.
    pub rel_change: f64,
}

#[derive(Debug, Clone)]
struct TensorRule {
    /// Rule in `y = -ln(1-X)`.
    x: GammaRule,
    /// Rule in `S / c`.
    s: GammaRule,
}

impl TensorRule {
    fn new(order: usize, x_shape: f64, s_shape: f64) -> Result<Self> {
        Ok(Self {
            x: GammaRule::new(order, x_shape)?,
            s: GammaRule::new(order, s_shape)?,
        })
    }
}

/// Largest integer power folded into a Laguerre weight.
const MAX_SHAPE_BOOST: u64 = 400;
/// Bisection steps when locating the mode of the inner integrand in `ln y`.
const MODE_SEARCH_STEPS: usize = 60;
/// Relative bracket width at which the inner mode search stops.
const MODE_RATIO_TOL: f64 = 1e-3;
/// Width in `ln S` at which the golden-section search for the outer mode stops.
const OUTER_MODE_WIDTH: f64 = 1e-2;

/// `Mh` marginal kernel of `N` with `(α, β)` integrated against independent Gamma priors.
///
/// With a common scale `c`, `X = α/(α+β) ~ Beta(a, b)` and
/// `S = α+β ~ Gamma(a+b, c)` are independent, and the zero-cell factor is
/// `(1-X)^{N-M} Π_{j=1}^{K-1} (1 - XS/(S+j))^{N-M}`. The `X` integral is
/// taken in `y = -ln(1-X)`, where the integrand vanishes like `y^{a+M-1}` at
/// the origin; in `S` it vanishes like `S^{a+b+L-1}`, with `L` the number of
/// individuals caught on some but not all occasions. Each dimension uses a
/// generalized Gauss–Laguerre rule whose shape matches that endpoint power and
/// whose rate puts the weight's peak on the integrand's mode, found per `N`
/// (and per `S` node for the inner integral). The rules follow the mass as it
/// moves toward `X = 0` for large `N` and as the data concentrate `S`, so a
/// fixed node count stays accurate on grids reaching millions.
#[derive(Debug, Clone)]
pub struct MhMarginal {
    m: u64,
    k: u64,
    /// `(captures, individuals)` pairs with a nonzero count.
    capture_freqs: Vec<(u64, u64)>,
    prior: GammaPrior,
    rule: TensorRule,
    check_rule: TensorRule,
}

impl MhMarginal {
    pub fn new(stats: &SufficientStats, prior: GammaPrior) -> Result<Self> {
        Self::with_orders(stats, prior, DEFAULT_QUAD_ORDER, CHECK_QUAD_ORDER)
    }

    pub fn with_orders(
        stats: &SufficientStats,
        prior: GammaPrior,
        order: usize,
        check_order: usize,
    ) -> Result<Self> {
        if stats.k == 0 {
            return Err(Error::Validation("K must be >= 1".into()));
        }
        let mut counts = vec![0u64; stats.k as usize + 1];
        for &y in &stats.y_i_dot {
            if y > stats.k {
                return Err(Error::Validation(format!("capture count {y} exceeds K")));
            }
            counts[y as usize] += 1;
        }
        let x_shape = prior.a + stats.m.min(MAX_SHAPE_BOOST) as f64;
        let partial: u64 = counts[1..stats.k as usize].iter().sum();
        let s_shape = prior.a + prior.b + partial.min(MAX_SHAPE_BOOST) as f64;
        let capture_freqs = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(y, &c)| (y as u64, c))
            .collect();
        Ok(Self {
            m: stats.m,
            k: stats.k,
            capture_freqs,
            prior,
            rule: TensorRule::new(order, x_shape, s_shape)?,
            check_rule: TensorRule::new(check_order, x_shape, s_shape)?,
        })
    }

    pub fn order(&self) -> usize {
        self.rule.x.order()
    }

    pub fn check_order(&self) -> usize {
        self.check_rule.x.order()
    }

    /// Log kernel with the default rule; `-inf` for `N < M`.
    pub fn log_kernel(&self, n: u64) -> f64 {
        if n < self.m {
            return f64::NEG_INFINITY;
        }
        ln_choose(n, self.m) + self.ln_expectation(n, &self.rule)
    }

    /// Evaluates with both rules and reports the relative change.
    pub fn check(&self, n: u64) -> QuadratureCheck {
        let coarse = self.log_kernel(n);
        let fine = if n < self.m {
            f64::NEG_INFINITY
        } else {
            ln_choose(n, self.m) + self.ln_expectation(n, &self.check_rule)
        };
        let rel_change = if coarse == fine {
            0.0
        } else {
            (fine - coarse).exp_m1().abs()
        };
        QuadratureCheck {
            n,
            coarse_order: self.order(),
            fine_order: self.check_order(),
            coarse,
            fine,
            rel_change,
        }
    }

    /// Default-rule value, or an error when the refinement disagrees by more than `tol`.
    pub fn log_kernel_checked(&self, n: u64, tol: f64) -> Result<f64> {
        let check = self.check(n);
        if check.rel_change.is_finite() && check.rel_change <= tol {
            Ok(check.coarse)
        } else {
            Err(Error::QuadratureNonConvergence {
                n,
                coarse: check.coarse,
                fine: check.fine,
                rel_change: check.rel_change,
                tolerance: tol,
            })
        }
    }

    /// Log of the `y`-integrand at fixed `S = total`, Beta normalization excluded.
    fn ln_inner(&self, y: f64, total: f64, unseen: f64, ln_total_ab: f64) -> f64 {
        let k = self.k as usize;
        let GammaPrior { a, b, .. } = self.prior;
        let x = -(-y).exp_m1();
        let alpha = x * total;
        let beta = total * (-y).exp();
        let zero_rest: f64 = (1..k).map(|j| (-alpha / (total + j as f64)).ln_1p()).sum();
        let up = prefix_sums(k, |j| (alpha + j).ln());
        let down = prefix_sums(k, |j| (beta + j).ln());
        let observed: f64 = self
            .capture_freqs
            .iter()
            .map(|&(cap, count)| {
                let cap = cap as usize;
                count as f64 * (up[cap] + down[k - cap] - ln_total_ab)
            })
            .sum();
        (a - 1.0) * x.ln() - (b + unseen) * y + unseen * zero_rest + observed
    }

    /// Derivative of [`Self::ln_inner`] in `y`.
    fn d_ln_inner(&self, y: f64, total: f64, unseen: f64) -> f64 {
        let k = self.k as usize;
        let GammaPrior { a, b, .. } = self.prior;
        let x = -(-y).exp_m1();
        let alpha = x * total;
        let beta = total * (-y).exp();
        let zero_rest: f64 = (1..k).map(|j| beta / (total + j as f64 - alpha)).sum();
        let up = prefix_sums(k, |j| beta / (alpha + j));
        let down = prefix_sums(k, |j| beta / (beta + j));
        let observed: f64 = self
            .capture_freqs
            .iter()
            .map(|&(cap, count)| {
                let cap = cap as usize;
                count as f64 * (up[cap] - down[k - cap])
            })
            .sum();
        (a - 1.0) / y.exp_m1() - (b + unseen) - unseen * zero_rest + observed
    }

    /// Rate of the Gamma weight in `y` for one `S` node.
    fn inner_rate(&self, shape: f64, total: f64, unseen: f64) -> f64 {
        let b = self.prior.b;
        let tail: f64 = (1..self.k).map(|j| total / (total + j as f64)).sum();
        let base = b + unseen * (1.0 + tail);
        if self.capture_freqs.is_empty() || shape <= 1.0 {
            return base;
        }
        // Bracket the mode in ln y, then bisect.
        let guess = (shape - 1.0) / base;
        let (mut lo, mut hi) = (guess, guess);
        for _ in 0..200 {
            if self.d_ln_inner(lo, total, unseen) > 0.0 {
                break;
            }
            lo *= 0.25;
        }
        for _ in 0..200 {
            if self.d_ln_inner(hi, total, unseen) < 0.0 {
                break;
            }
            hi *= 4.0;
        }
        for _ in 0..MODE_SEARCH_STEPS {
            if hi / lo < 1.0 + MODE_RATIO_TOL {
                break;
            }
            let mid = (lo * hi).sqrt();
            if self.d_ln_inner(mid, total, unseen) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mode = (lo * hi).sqrt();
        if mode.is_finite() && mode > 0.0 {
            (shape - 1.0) / mode
        } else {
            base
        }
    }

    /// `ln ∫ g(y) dy` at `S = total`, with `g` as in [`Self::ln_inner`].
    fn ln_inner_integral(&self, total: f64, unseen: f64, rule: &GammaRule) -> f64 {
        let k = self.k as usize;
        let shape = rule.shape();
        let ln_total_ab: f64 = (0..k).map(|j| (total + j as f64).ln()).sum();
        let rate = self.inner_rate(shape, total, unseen);
        // ∫ g(y) dy = Γ(A) ρ^{-A} E[g(T/ρ) (T/ρ)^{1-A} e^T], T ~ Gamma(A, 1).
        let mut acc = LogSumExp::default();
        for (&t, &lw) in rule.nodes().iter().zip(rule.ln_weights()) {
            let y = t / rate;
            acc.add(lw + self.ln_inner(y, total, unseen, ln_total_ab) + (1.0 - shape) * y.ln() + t);
        }
        acc.value() + ln_gamma(shape) - shape * rate.ln()
    }

    /// Log of the outer integrand in `s = S/c`, Gamma(a+b, 1) density included.
    fn ln_outer(&self, s: f64, unseen: f64, rule: &GammaRule) -> f64 {
        let GammaPrior { a, b, c } = self.prior;
        (a + b - 1.0) * s.ln() - s - ln_gamma(a + b) + self.ln_inner_integral(c * s, unseen, rule)
    }

    /// Rate of the Gamma weight in `s` that peaks at the outer integrand's mode.
    fn outer_rate(&self, shape: f64, unseen: f64, rule: &GammaRule) -> f64 {
        if shape <= 1.0 {
            return 1.0;
        }
        let f = |w: f64| self.ln_outer(w.exp(), unseen, rule);
        let mut mid = (shape - 1.0).ln();
        let mut f_mid = f(mid);
        let mut step = 0.5;
        // Walk uphill until the mode is bracketed.
        let (mut lo, mut hi) = (mid - step, mid + step);
        let (mut f_lo, mut f_hi) = (f(lo), f(hi));
        for _ in 0..200 {
            if f_lo <= f_mid && f_hi <= f_mid {
                break;
            }
            if f_hi > f_mid {
                (lo, f_lo) = (mid, f_mid);
                (mid, f_mid) = (hi, f_hi);
                step *= 1.5;
                hi = mid + step;
                f_hi = f(hi);
            } else {
                (hi, f_hi) = (mid, f_mid);
                (mid, f_mid) = (lo, f_lo);
                step *= 1.5;
                lo = mid - step;
                f_lo = f(lo);
            }
        }
        if !(f_mid.is_finite() && f_lo <= f_mid && f_hi <= f_mid) {
            return 1.0;
        }
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut p = hi - inv_phi * (hi - lo);
        let mut q = lo + inv_phi * (hi - lo);
        let (mut fp, mut fq) = (f(p), f(q));
        while hi - lo > OUTER_MODE_WIDTH {
            if fp >= fq {
                hi = q;
                q = p;
                fq = fp;
                p = hi - inv_phi * (hi - lo);
                fp = f(p);
            } else {
                lo = p;
                p = q;
                fp = fq;
                q = lo + inv_phi * (hi - lo);
                fq = f(q);
            }
        }
        let mode = (0.5 * (lo + hi)).exp();
        (shape - 1.0) / mode
    }

    fn ln_expectation(&self, n: u64, rule: &TensorRule) -> f64 {
        let GammaPrior { a, b, .. } = self.prior;
        let unseen = (n - self.m) as f64;
        let shape = rule.s.shape();
        let rate = self.outer_rate(shape, unseen, &rule.x);
        let mut acc = LogSumExp::default();
        for (&t, &lw) in rule.s.nodes().iter().zip(rule.s.ln_weights()) {
            let s = t / rate;
            acc.add(lw + self.ln_outer(s, unseen, &rule.x) + (1.0 - shape) * s.ln() + t);
        }
        acc.value() + ln_gamma(shape) - shape * rate.ln() - ln_beta(a, b)
    }
}

/// `out[i] = f(0) + ... + f(i - 1)` for `i` in `0..=k`.
fn prefix_sums(k: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    let mut acc = 0.0;
    out.push(acc);
    for j in 0..k {
        acc += f(j as f64);
        out.push(acc);
    }
    out
}

/// `Mh` marginal log kernel with default quadrature, checked against the refined rule.
pub fn mh_marginal_log_kernel(n: u64, stats: &SufficientStats, prior: GammaPrior) -> Result<f64> {
    MhMarginal::new(stats, prior)?.log_kernel_checked(n, DEFAULT_QUAD_TOL)
}

/// Power-law extrapolation of the posterior beyond `N_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    /// Fitted `d` in `prior(N) kernel(N) ≈ C N^{-d}` over the last decade.
    pub exponent: f64,
    pub exponent_se: f64,
    pub fit_lo: u64,
    pub fit_hi: u64,
    /// Probability beyond `N_max`; `None` when the fitted tail is not summable.
    pub mass: Option<f64>,
}

/// Normalized discrete posterior of `N` on `[N_min, N_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTable {
    pub n_prior: NPrior,
    pub support: [u64; 2],
    #[serde(skip)]
    pub log_kernel: Vec<f64>,
    pub log_normalizer: f64,
    pub mass: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub level: f64,
    pub ci: [u64; 2],
    /// Estimated probability beyond `N_max`; `None` means the tail is not summable.
    pub tail_mass_estimate: Option<f64>,
    pub tail: Option<TailEstimate>,
    /// Bound on how far the mean can move if the support is extended; `None` when unbounded.
    pub mean_shift_bound: Option<f64>,
    pub warnings: Vec<String>,
}

impl PosteriorTable {
    /// Evaluates `log_kernel` on `[n_min, n_max]`, applies the prior and normalizes.
    pub fn build<F>(
        log_kernel: F,
        n_prior: NPrior,
        n_min: u64,
        n_max: u64,
        level: f64,
    ) -> Result<Self>
    where
        F: Fn(u64) -> f64 + Sync,
    {
        if n_max < n_min {
            return Err(Error::InvalidArgument(format!(
                "N_max = {n_max} is below the support start {n_min}"
            )));
        }
        if n_prior == NPrior::Scale && n_min == 0 {
            return Err(Error::InvalidArgument(
                "scale prior is undefined at N = 0".into(),
            ));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "credible level must lie in (0, 1), got {level}"
            )));
        }
        let log_kernel: Vec<f64> = (n_min..=n_max).into_par_iter().map(&log_kernel).collect();
        Self::from_log_kernel(log_kernel, n_prior, n_min, level)
    }

    /// Builds a table from kernel values already evaluated at `n_min, n_min+1, ...`.
    pub fn from_log_kernel(
        log_kernel: Vec<f64>,
        n_prior: NPrior,
        n_min: u64,
        level: f64,
    ) -> Result<Self> {
        if log_kernel.is_empty() {
            return Err(Error::InvalidArgument("empty support".into()));
        }
        let n_max = n_min + log_kernel.len() as u64 - 1;
        if let Some(i) = log_kernel
            .iter()
            .position(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return Err(Error::NonFinite {
                n: n_min + i as u64,
            });
        }
        let log_post: Vec<f64> = log_kernel
            .iter()
            .enumerate()
            .map(|(i, &lk)| lk + n_prior.ln_weight(n_min + i as u64))
            .collect();
        let mut acc = LogSumExp::default();
        for &v in &log_post {
            acc.add(v);
        }
        let log_normalizer = acc.value();
        if log_normalizer == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(
                "kernel is zero on the whole support".into(),
            ));
        }
        let mass: Vec<f64> = log_post
            .iter()
            .map(|v| (v - log_normalizer).exp())
            .collect();

        let ns = (n_min..=n_max).map(|n| n as f64);
        let mean: f64 = ns.clone().zip(&mass).map(|(n, w)| n * w).sum();
        let var: f64 = ns.zip(&mass).map(|(n, w)| (n - mean).powi(2) * w).sum();
        let ci = equal_tail_interval(&mass, n_min, level);

        let mut warnings = Vec::new();
        let tail = fit_last_decade(&log_post, n_min);
        let (tail_mass_estimate, mean_shift_bound) = match &tail {
            None => {
                warnings.push(
                    "support too short to extrapolate the tail; mass beyond N_max not estimated"
                        .to_string(),
                );
                (None, None)
            }
            Some(t) if t.mass.is_none() => {
                warnings.push(format!(
                    "posterior likely improper; normalization unreliable \
                     (fitted tail exponent {:.3} <= {:.2})",
                    t.exponent,
                    1.0 + TAIL_MARGIN
                ));
                (None, None)
            }
            Some(t) => {
                let tau = t.mass.unwrap_or(0.0);
                let bound = if t.exponent > 2.0 {
                    let tail_mean = n_max as f64 * (t.exponent - 1.0) / (t.exponent - 2.0);
                    Some(tau * (tail_mean - mean).abs())
                } else if tau == 0.0 {
                    Some(0.0)
                } else {
                    None
                };
                (Some(tau), bound)
            }
        };

        Ok(Self {
            n_prior,
            support: [n_min, n_max],
            log_kernel,
            log_normalizer,
            mass,
            mean,
            sd: var.max(0.0).sqrt(),
            level,
            ci,
            tail_mass_estimate,
            tail,
            mean_shift_bound,
            warnings,
        })
    }

    pub fn support_len(&self) -> usize {
        self.mass.len()
    }

    /// True when the fitted tail is not summable.
    pub fn likely_improper(&self) -> bool {
        self.tail.is_some_and(|t| t.mass.is_none())
    }

    pub fn to_json_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// `N,mass,log_kernel` rows for plotting.
    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["N", "mass", "log_kernel"])?;
        for (i, (m, lk)) in self.mass.iter().zip(&self.log_kernel).enumerate() {
            let n = self.support[0] + i as u64;
            wtr.write_record([n.to_string(), format!("{m:e}"), format!("{lk}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn equal_tail_interval(mass: &[f64], n_min: u64, level: f64) -> [u64; 2] {
    let lo_target = (1.0 - level) / 2.0;
    let hi_target = 1.0 - lo_target;
    let mut cdf = 0.0;
    let mut lo = None;
    let mut hi = None;
    for (i, &m) in mass.iter().enumerate() {
        cdf += m;
        if lo.is_none() && cdf >= lo_target {
            lo = Some(i);
        }
        if hi.is_none() && cdf >= hi_target {
            hi = Some(i);
            break;
        }
    }
    let last = mass.len() - 1;
    [
        n_min + lo.unwrap_or(last) as u64,
        n_min + hi.unwrap_or(last) as u64,
    ]
}

/// Least-squares power law through `ln f` on `[N_max/10, N_max]` and its analytic tail sum.
fn fit_last_decade(log_post: &[f64], n_min: u64) -> Option<TailEstimate> {
    let n_max = n_min + log_post.len() as u64 - 1;
    let lo = (n_max / 10).max(n_min).max(1);
    if n_max < lo + 2 {
        return None;
    }
    let (ln_lo, ln_hi) = ((lo as f64).ln(), (n_max as f64).ln());
    let mut grid: Vec<u64> = (0..TAIL_FIT_POINTS)
        .map(|i| {
            let t = i as f64 / (TAIL_FIT_POINTS - 1) as f64;
            ((ln_lo + t * (ln_hi - ln_lo)).exp().round() as u64).clamp(lo, n_max)
        })
        .collect();
    grid.dedup();
    let points: Vec<(f64, f64)> = grid
        .iter()
        .map(|&n| ((n as f64).ln(), log_post[(n - n_min) as usize]))
        .filter(|(_, y)| y.is_finite())
        .collect();
    if points.len() < 3 {
        // Kernel is zero throughout the last decade: nothing to extrapolate.
        return if points.is_empty() {
            Some(TailEstimate {
                exponent: f64::INFINITY,
                exponent_se: 0.0,
                fit_lo: lo,
                fit_hi: n_max,
                mass: Some(0.0),
            })
        } else {
            None
        };
    }
    let fit = crate::propriety::least_squares_slope(&points);
    let d = -fit.slope;
    let mass = if d > 1.0 + TAIL_MARGIN {
        let ln_tail = fit.intercept + (1.0 - d) * (n_max as f64).ln() - (d - 1.0).ln();
        let ln_body = crate::special::log_sum_exp(log_post.iter().copied());
        Some(1.0 / (1.0 + (ln_body - ln_tail).exp()))
    } else {
        None
    };
    Some(TailEstimate {
        exponent: d,
        exponent_se: fit.slope_se,
        fit_lo: lo,
        fit_hi: n_max,
        mass,
    })
}
