//! Posterior propriety: analytic tail conditions and their empirical check.
//!
//! A posterior on the non-negative integers is proper when `prior(N) kernel(N)`
//! decays faster than `1/N`. Each model has an analytic tail exponent `d` for
//! the prior-free kernel; the uniform prior leaves it unchanged and the scale
//! prior adds one. The empirical side fits `d` by least squares on a
//! geometric grid of `ln N` and cross-checks it with a doubling probe.

use serde::{Deserialize, Serialize};

use crate::capture_data::SufficientStats;
use crate::error::{Error, Result};
use crate::likelihoods::{york_madigan_log_kernel, BetaParams};
use crate::posterior::{
    m0_marginal_log_kernel, GammaPrior, MhMarginal, NPrior, QuadratureCheck, DEFAULT_QUAD_TOL,
};
use crate::special::ln_gamma;

pub const DEFAULT_TOLERANCE: f64 = 0.05;
pub const DEFAULT_FIT_POINTS: usize = 50;
pub const DEFAULT_FIT_LO_FACTOR: u64 = 1_000;
pub const DEFAULT_FIT_HI_FACTOR: u64 = 1_000_000;
/// Relative slack under which an analytic condition counts as an equality.
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Proper,
    Improper,
    /// Equality in an "if and only if" condition; the posterior is improper.
    Boundary,
    /// A sufficient condition fails, so the theorem makes no claim.
    NotGuaranteed,
}

impl Verdict {
    pub fn is_proper(self) -> bool {
        self == Verdict::Proper
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Proper => "proper",
            Verdict::Improper => "improper",
            Verdict::Boundary => "boundary (improper)",
            Verdict::NotGuaranteed => "not guaranteed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    M0,
    Mh,
    YorkMadigan,
    /// Pure power law `N^{-d}`, for exercising the fitting machinery.
    Synthetic,
}

/// Verdict for an "if and only if" condition `total > 1` on the full tail exponent.
fn iff_verdict(total: f64) -> Verdict {
    if (total - 1.0).abs() <= BOUNDARY_EPS {
        Verdict::Boundary
    } else if total > 1.0 {
        Verdict::Proper
    } else {
        Verdict::Improper
    }
}

/// `M0` with a Beta(`a`, ·) prior on `p`: `d = n. - M + a`; proper iff
/// `d > 1` (uniform) or `d > 0` (scale).
pub fn theorem1_condition(stats: &SufficientStats, a: f64, n_prior: NPrior) -> (f64, Verdict) {
    let d = stats.recaptures() as f64 + a;
    (d, iff_verdict(d + n_prior.exponent_shift()))
}

/// `Mh` with Gamma(`a`, `c`) on `α`: proper if `a > 1` (uniform) or `a > 0` (scale).
/// Sufficient only, so failure gives [`Verdict::NotGuaranteed`].
pub fn theorem2_condition(a: f64, n_prior: NPrior) -> Verdict {
    let total = a + n_prior.exponent_shift();
    if total > 1.0 + BOUNDARY_EPS {
        Verdict::Proper
    } else {
        Verdict::NotGuaranteed
    }
}

/// Dirichlet-multinomial kernel: proper iff `δ > 1/(k-1)` (uniform); always proper under the scale prior.
pub fn ym_condition(k: u64, delta: f64, n_prior: NPrior) -> Verdict {
    let d = (k.saturating_sub(1)) as f64 * delta;
    iff_verdict(d + n_prior.exponent_shift())
}

/// Doubling probe `-(ln f(2N) - ln f(N)) / ln 2` on a log kernel.
pub fn local_exponent<F: Fn(u64) -> f64>(log_kernel: F, n: u64) -> Result<f64> {
    let (f1, f2) = (log_kernel(n), log_kernel(2 * n));
    if !f1.is_finite() {
        return Err(Error::NonFinite { n });
    }
    if !f2.is_finite() {
        return Err(Error::NonFinite { n: 2 * n });
    }
    Ok(-(f2 - f1) / std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

/// Ordinary least squares `y = intercept + slope x`. Needs at least two distinct `x`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if points.len() > 2 {
        let rss: f64 = points
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LinearFit {
        slope,
        intercept,
        slope_se,
    }
}

/// Geometric grid of distinct integers from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut grid: Vec<u64> = (0..points)
        .map(|i| {
            let t = i as f64 / (points - 1) as f64;
            ((a + t * (b - a)).exp().round() as u64).clamp(lo, hi)
        })
        .collect();
    grid.dedup();
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub exponent: f64,
    pub std_err: f64,
    pub fit_range: [u64; 2],
    /// `(N, ln f(N))` pairs used in the regression.
    pub grid: Vec<(u64, f64)>,
}

/// Fits `ln f(N) ≈ c - d ln N` on a geometric grid over `[lo, hi]`; returns `d` and its standard error.
pub fn fit_tail_exponent<F: Fn(u64) -> f64>(
    log_kernel: F,
    lo: u64,
    hi: u64,
    points: usize,
) -> Result<TailFit> {
    if lo == 0 {
        return Err(Error::InvalidArgument(
            "fit range must start at N >= 1".into(),
        ));
    }
    if hi < 4 * lo {
        return Err(Error::InvalidArgument(format!(
            "fit range [{lo}, {hi}] must span at least a factor of 4"
        )));
    }
    if points < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 fit points, got {points}"
        )));
    }
    let grid: Vec<(u64, f64)> = geometric_grid(lo, hi, points)
        .into_iter()
        .map(|n| (n, log_kernel(n)))
        .collect();
    if let Some(&(n, _)) = grid.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { n });
    }
    let xy: Vec<(f64, f64)> = grid.iter().map(|&(n, v)| ((n as f64).ln(), v)).collect();
    let fit = least_squares_slope(&xy);
    Ok(TailFit {
        exponent: -fit.slope,
        std_err: fit.slope_se,
        fit_range: [lo, hi],
        grid,
    })
}

/// `|x^a Γ(x+b) / Γ(x+a+b) - 1|`, the deviation of the gamma ratio from its large-`x` limit.
pub fn gamma_ratio_asymptotic_check(x: f64, a: f64, b: f64) -> f64 {
    let ln_ratio = a * x.ln() + ln_gamma(x + b) - ln_gamma(x + a + b);
    ln_ratio.exp_m1().abs()
}

/// Model and data to assess.
#[derive(Debug, Clone)]
pub enum ModelInput {
    M0 {
        stats: SufficientStats,
        beta: BetaParams,
    },
    Mh {
        stats: SufficientStats,
        prior: GammaPrior,
    },
    YorkMadigan {
        n_obs: u64,
        k: u64,
        delta: f64,
    },
    Synthetic {
        exponent: f64,
    },
}

impl ModelInput {
    pub fn model(&self) -> Model {
        match self {
            ModelInput::M0 { .. } => Model::M0,
            ModelInput::Mh { .. } => Model::Mh,
            ModelInput::YorkMadigan { .. } => Model::YorkMadigan,
            ModelInput::Synthetic { .. } => Model::Synthetic,
        }
    }

    /// Sets the natural scale of the fit grid.
    fn scale(&self) -> u64 {
        match self {
            ModelInput::M0 { stats, .. } | ModelInput::Mh { stats, .. } => stats.m.max(1),
            ModelInput::YorkMadigan { n_obs, .. } => (*n_obs).max(1),
            ModelInput::Synthetic { .. } => 1,
        }
    }

    /// Prior-free analytic exponent and the theorem's verdict.
    fn analytic(&self, n_prior: NPrior) -> (f64, Verdict) {
        match self {
            ModelInput::M0 { stats, beta } => theorem1_condition(stats, beta.a, n_prior),
            ModelInput::Mh { prior, .. } => (prior.a, theorem2_condition(prior.a, n_prior)),
            ModelInput::YorkMadigan { k, delta, .. } => {
                ((*k - 1) as f64 * delta, ym_condition(*k, *delta, n_prior))
            }
            ModelInput::Synthetic { exponent } => {
                (*exponent, iff_verdict(exponent + n_prior.exponent_shift()))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelInput::M0 { stats, .. } | ModelInput::Mh { stats, .. } => stats.validate(),
            ModelInput::YorkMadigan { k, delta, .. } => {
                york_madigan_log_kernel(0, 0, *k, *delta).map(|_| ())
            }
            ModelInput::Synthetic { exponent } if exponent.is_finite() => Ok(()),
            ModelInput::Synthetic { exponent } => Err(Error::InvalidArgument(format!(
                "synthetic exponent must be finite, got {exponent}"
            ))),
        }
    }
}

/// Evaluator for the prior-free log kernel of a model.
pub struct KernelEvaluator {
    inner: Evaluator,
}

enum Evaluator {
    M0(SufficientStats, BetaParams),
    Mh(Box<MhMarginal>),
    YorkMadigan(u64, u64, f64),
    Synthetic(f64),
}

impl KernelEvaluator {
    pub fn new(input: &ModelInput) -> Result<Self> {
        input.validate()?;
        let inner = match input {
            ModelInput::M0 { stats, beta } => Evaluator::M0(stats.clone(), *beta),
            ModelInput::Mh { stats, prior } => {
                Evaluator::Mh(Box::new(MhMarginal::new(stats, *prior)?))
            }
            ModelInput::YorkMadigan { n_obs, k, delta } => {
                Evaluator::YorkMadigan(*n_obs, *k, *delta)
            }
            ModelInput::Synthetic { exponent } => Evaluator::Synthetic(*exponent),
        };
        Ok(Self { inner })
    }

    pub fn log_kernel(&self, n: u64) -> f64 {
        match &self.inner {
            Evaluator::M0(stats, beta) => m0_marginal_log_kernel(n, stats, *beta),
            Evaluator::Mh(mh) => mh.log_kernel(n),
            Evaluator::YorkMadigan(n_obs, k, delta) => {
                york_madigan_log_kernel(n, *n_obs, *k, *delta).unwrap_or(f64::NAN)
            }
            Evaluator::Synthetic(d) => -d * (n as f64).ln(),
        }
    }

    pub fn mh(&self) -> Option<&MhMarginal> {
        match &self.inner {
            Evaluator::Mh(mh) => Some(mh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Grid start; defaults to `1000 max(1, M)`.
    pub lo: Option<u64>,
    /// Grid end; defaults to `10^6 max(1, M)`.
    pub hi: Option<u64>,
    pub points: usize,
    pub tolerance: f64,
    /// Relative-change tolerance for the `Mh` quadrature check.
    pub quad_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lo: None,
            hi: None,
            points: DEFAULT_FIT_POINTS,
            tolerance: DEFAULT_TOLERANCE,
            quad_tolerance: DEFAULT_QUAD_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProprietyReport {
    pub model: Model,
    pub n_prior: NPrior,
    /// Tail exponent of the prior-free kernel predicted by theory.
    pub analytic_exponent: f64,
    /// `analytic_exponent` plus the prior's contribution.
    pub total_analytic_exponent: f64,
    pub predicted: Verdict,
    /// Fitted exponent of `prior(N) kernel(N)`.
    pub fitted_exponent: Option<f64>,
    pub fitted_se: Option<f64>,
    pub fit_range: [u64; 2],
    /// Doubling probe at `N_hi / 2`.
    pub local_exponent: Option<f64>,
    /// Probe and regression agree within `max(2 SE, tolerance)`.
    pub probes_consistent: bool,
    pub tolerance: f64,
    pub agreement: bool,
    pub quadrature: Vec<QuadratureCheck>,
    pub fit_error: Option<String>,
    #[serde(skip)]
    pub grid: Vec<(u64, f64)>,
}

impl ProprietyReport {
    pub fn to_json_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// `N,log_kernel,local_exponent` rows over the fit grid; the exponent column
    /// is the slope between consecutive grid points.
    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["N", "log_kernel", "local_exponent"])?;
        for (i, &(n, v)) in self.grid.iter().enumerate() {
            let local = if i == 0 {
                String::new()
            } else {
                let (n0, v0) = self.grid[i - 1];
                let d = -(v - v0) / ((n as f64).ln() - (n0 as f64).ln());
                format!("{d}")
            };
            wtr.write_record([n.to_string(), format!("{v}"), local])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Analytic verdict plus fitted exponent of `prior(N) kernel(N)`.
///
/// Agreement means `|analytic - fitted| <= tolerance`, except for `Mh` where
/// the theorem only bounds the kernel from above and agreement means
/// `fitted >= analytic - tolerance`. A failed fit is reported in `fit_error`
/// with `agreement = false`.
pub fn propriety_report(
    input: &ModelInput,
    n_prior: NPrior,
    config: &FitConfig,
) -> Result<ProprietyReport> {
    let evaluator = KernelEvaluator::new(input)?;
    let scale = input.scale();
    let lo = config.lo.unwrap_or(DEFAULT_FIT_LO_FACTOR * scale);
    let hi = config.hi.unwrap_or(DEFAULT_FIT_HI_FACTOR * scale);
    let (analytic, predicted) = input.analytic(n_prior);
    let total = analytic + n_prior.exponent_shift();
    let with_prior = |n: u64| evaluator.log_kernel(n) + n_prior.ln_weight(n);

    let mut report = ProprietyReport {
        model: input.model(),
        n_prior,
        analytic_exponent: analytic,
        total_analytic_exponent: total,
        predicted,
        fitted_exponent: None,
        fitted_se: None,
        fit_range: [lo, hi],
        local_exponent: None,
        probes_consistent: false,
        tolerance: config.tolerance,
        agreement: false,
        quadrature: Vec::new(),
        fit_error: None,
        grid: Vec::new(),
    };

    if let Some(mh) = evaluator.mh() {
        report.quadrature = [lo, hi].iter().map(|&n| mh.check(n)).collect();
        if let Some(bad) = report
            .quadrature
            .iter()
            .find(|c| c.rel_change.is_nan() || c.rel_change > config.quad_tolerance)
        {
            report.fit_error = Some(
                Error::QuadratureNonConvergence {
                    n: bad.n,
                    coarse: bad.coarse,
                    fine: bad.fine,
                    rel_change: bad.rel_change,
                    tolerance: config.quad_tolerance,
                }
                .to_string(),
            );
            return Ok(report);
        }
    }

    let fit = match fit_tail_exponent(with_prior, lo, hi, config.points) {
        Ok(fit) => fit,
        Err(e) => {
            report.fit_error = Some(e.to_string());
            return Ok(report);
        }
    };
    let probe = local_exponent(with_prior, hi / 2).ok();
    report.probes_consistent = probe
        .is_some_and(|d| (d - fit.exponent).abs() <= (2.0 * fit.std_err).max(config.tolerance));
    report.local_exponent = probe;
    report.fitted_exponent = Some(fit.exponent);
    report.fitted_se = Some(fit.std_err);
    report.agreement = match input.model() {
        Model::Mh => fit.exponent >= total - config.tolerance,
        _ => (fit.exponent - total).abs() <= config.tolerance,
    };
    report.grid = fit.grid;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture_data::CaptureHistory;

    fn counts(k: usize, y: &[u64]) -> SufficientStats {
        CaptureHistory::from_capture_counts(k, y)
            .unwrap()
            .summarize()
    }

    #[test]
    fn theorem1_cases() {
        let s = counts(5, &[3, 1, 1]); // n. = 5, M = 3
        assert_eq!(
            theorem1_condition(&s, 1.0, NPrior::Uniform),
            (3.0, Verdict::Proper)
        );
        let r0 = counts(5, &[1, 1, 1]);
        assert_eq!(
            theorem1_condition(&r0, 1.0, NPrior::Uniform),
            (1.0, Verdict::Boundary)
        );
        assert!(!theorem1_condition(&r0, 1.0, NPrior::Uniform).1.is_proper());
        assert_eq!(
            theorem1_condition(&r0, 1.0, NPrior::Scale).1,
            Verdict::Proper
        );
        assert_eq!(
            theorem1_condition(&r0, 0.5, NPrior::Uniform).1,
            Verdict::Improper
        );
    }

    #[test]
    fn theorem1_verdict_is_monotone_in_a() {
        let r0 = counts(3, &[1, 1]);
        let mut seen_proper = false;
        for i in 1..400 {
            let a = i as f64 * 0.01;
            let proper = theorem1_condition(&r0, a, NPrior::Uniform).1.is_proper();
            assert!(!(seen_proper && !proper));
            seen_proper |= proper;
        }
        assert!(seen_proper);
    }

    #[test]
    fn theorem2_cases() {
        assert_eq!(theorem2_condition(1.5, NPrior::Uniform), Verdict::Proper);
        assert_eq!(theorem2_condition(0.5, NPrior::Scale), Verdict::Proper);
        assert_eq!(
            theorem2_condition(1.0, NPrior::Uniform),
            Verdict::NotGuaranteed
        );
        assert_eq!(
            theorem2_condition(0.5, NPrior::Uniform),
            Verdict::NotGuaranteed
        );
    }

    #[test]
    fn ym_cases() {
        assert_eq!(ym_condition(2, 1.0, NPrior::Uniform), Verdict::Boundary);
        assert_eq!(ym_condition(6, 0.25, NPrior::Uniform), Verdict::Proper);
        assert_eq!(ym_condition(6, 0.2, NPrior::Uniform), Verdict::Boundary);
        assert_eq!(ym_condition(6, 0.1, NPrior::Uniform), Verdict::Improper);
        for &d in &[0.001, 0.05, 1.0, 7.0] {
            assert_eq!(ym_condition(4, d, NPrior::Scale), Verdict::Proper);
        }
    }

    #[test]
    fn local_exponent_on_exact_laws() {
        let d = local_exponent(|n| -2.0 * (n as f64).ln(), 1000).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert_eq!(local_exponent(|_| 7f64.ln(), 10).unwrap(), 0.0);
        assert!(local_exponent(|n| if n > 10 { f64::NEG_INFINITY } else { 0.0 }, 10).is_err());
        let s = counts(2, &[2, 1]);
        let d = local_exponent(
            |n| m0_marginal_log_kernel(n, &s, BetaParams::uniform()),
            1_000_000,
        )
        .unwrap();
        assert!((d - 2.0).abs() < 0.01);
    }

    #[test]
    fn fit_on_exact_power_law() {
        let fit =
            fit_tail_exponent(|n| 3f64.ln() - 1.5 * (n as f64).ln(), 10, 100_000, 30).unwrap();
        assert!((fit.exponent - 1.5).abs() < 1e-12);
        assert!(fit.std_err < 1e-10);
        assert!(fit_tail_exponent(|_| 0.0, 10, 20, 30).is_err());
        assert!(fit_tail_exponent(|_| 0.0, 10, 100, 5).is_err());
        assert!(fit_tail_exponent(|_| f64::NAN, 10, 100, 10).is_err());
    }

    #[test]
    fn gamma_ratio_check() {
        for &(x, b) in &[(10.0, 0.5), (1e3, 4.0), (2.5, 2.5)] {
            let dev = gamma_ratio_asymptotic_check(x, 1.0, b);
            assert!((dev - b / (x + b)).abs() < 1e-12);
        }
        assert_eq!(gamma_ratio_asymptotic_check(10.0, 0.0, 1.7), 0.0);
        assert!(gamma_ratio_asymptotic_check(1e6, 2.5, 1.3) < 1e-3);
    }

    #[test]
    fn synthetic_report() {
        let r = propriety_report(
            &ModelInput::Synthetic { exponent: 2.0 },
            NPrior::Uniform,
            &FitConfig::default(),
        )
        .unwrap();
        assert!((r.fitted_exponent.unwrap() - 2.0).abs() < 1e-9);
        assert!(r.agreement && r.probes_consistent);
        assert_eq!(r.predicted, Verdict::Proper);
        let mut buf = Vec::new();
        r.to_csv_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("N,log_kernel,local_exponent\n"));
        assert_eq!(text.lines().count(), r.grid.len() + 1);
    }
}
