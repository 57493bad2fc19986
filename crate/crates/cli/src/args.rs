use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use recapture::posterior::{CHECK_QUAD_ORDER, DEFAULT_LEVEL, DEFAULT_QUAD_ORDER, DEFAULT_QUAD_TOL};
use recapture::propriety::{DEFAULT_FIT_POINTS, DEFAULT_TOLERANCE};
use recapture::NPrior;

/// Bayesian population-size estimation for closed capture-recapture data.
///
/// Exit codes: 0 success, 2 usage or input error, 3 propriety warning,
/// 4 analytic/empirical disagreement, 5 numeric failure.
#[derive(Debug, Parser)]
#[command(name = "recapture", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a capture-history dataset.
    Simulate(SimulateArgs),
    /// Posterior of N for a dataset under M0 or Mh.
    Analyze(AnalyzeArgs),
    /// Compare analytic propriety conditions with a fitted tail exponent.
    CheckPropriety(CheckArgs),
    /// Data-augmentation Gibbs runs over a list of augmented sizes M.
    DaSweep(SweepArgs),
    /// Posterior of N under the Dirichlet-multinomial list model.
    Ym(YmArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptureModel {
    M0,
    Mh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorArg {
    Uniform,
    Scale,
}

impl From<PriorArg> for NPrior {
    fn from(p: PriorArg) -> Self {
        match p {
            PriorArg::Uniform => NPrior::Uniform,
            PriorArg::Scale => NPrior::Scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiArg {
    /// Beta(1, 1): uniform prior on N over {0..M}.
    Uniform,
    /// Beta(0.001, 1): roughly 1/N, approximate only.
    Scale,
}

fn probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn level(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1)"))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: CaptureModel,
    /// True population size.
    #[arg(long)]
    pub n: u64,
    /// Detection probability (m0).
    #[arg(long, value_parser = probability, required_if_eq("model", "m0"))]
    pub p: Option<f64>,
    /// Beta shape alpha of individual detection probabilities (mh).
    #[arg(long, value_parser = positive, required_if_eq("model", "mh"))]
    pub alpha: Option<f64>,
    /// Beta shape beta of individual detection probabilities (mh).
    #[arg(long, value_parser = positive, required_if_eq("model", "mh"))]
    pub beta: Option<f64>,
    /// Number of occasions.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; `.csv` selects CSV, anything else JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct QuadArgs {
    /// Nodes per dimension for the Mh quadrature.
    #[arg(long, default_value_t = DEFAULT_QUAD_ORDER)]
    pub quad_order: usize,
    /// Nodes per dimension for the convergence check.
    #[arg(long, default_value_t = CHECK_QUAD_ORDER)]
    pub check_order: usize,
    /// Largest accepted relative change between the two rules.
    #[arg(long, default_value_t = DEFAULT_QUAD_TOL, value_parser = positive)]
    pub quad_tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Dataset file (JSON or CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Occasions for a CSV dataset; inferred from the first row when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "m0")]
    pub model: CaptureModel,
    #[arg(long, value_enum, default_value = "uniform")]
    pub prior: PriorArg,
    /// Beta prior on p (m0): first shape.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub a: f64,
    /// Beta prior on p (m0): second shape.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub b: f64,
    /// Gamma shape of alpha (mh).
    #[arg(long, default_value_t = 2.0, value_parser = positive)]
    pub gamma_a: f64,
    /// Gamma shape of beta (mh).
    #[arg(long, default_value_t = 2.0, value_parser = positive)]
    pub gamma_b: f64,
    /// Common Gamma scale (mh).
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub gamma_c: f64,
    /// Upper end of the support; 100000 for m0, 10000 for mh.
    #[arg(long)]
    pub n_max: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_LEVEL, value_parser = level)]
    pub level: f64,
    #[command(flatten)]
    pub quad: QuadArgs,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV table path (N, mass, log_kernel).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckModel {
    M0,
    Mh,
    Ym,
}

#[derive(Debug, Args, Serialize)]
pub struct CheckArgs {
    /// Scenario JSON file; replaces the model flags.
    #[arg(long, conflicts_with_all = ["model", "synthetic_exponent"])]
    pub scenario: Option<PathBuf>,
    /// Fit a pure power law N^-d instead of a model kernel.
    #[arg(long, conflicts_with = "model", allow_negative_numbers = true)]
    pub synthetic_exponent: Option<f64>,
    #[arg(long, value_enum)]
    pub model: Option<CheckModel>,
    #[arg(long, value_enum, default_value = "uniform")]
    pub prior: PriorArg,
    /// Dataset file (m0, mh).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Observed individuals (m0 without a dataset; ym list total).
    #[arg(long)]
    pub m: Option<u64>,
    /// Total captures (m0 without a dataset).
    #[arg(long)]
    pub n_dot: Option<u64>,
    /// Occasions (m0 without a dataset) or cells (ym).
    #[arg(long)]
    pub k: Option<u64>,
    /// Beta first shape (m0) or Gamma shape of alpha (mh).
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub a: f64,
    /// Beta second shape (m0) or Gamma shape of beta (mh).
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub b: f64,
    /// Common Gamma scale (mh).
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub c: f64,
    /// Dirichlet concentration (ym).
    #[arg(long, value_parser = positive)]
    pub delta: Option<f64>,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of the fit grid (N, log_kernel, local_exponent).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Fit grid start; default 1000 max(1, M).
    #[arg(long)]
    pub fit_lo: Option<u64>,
    /// Fit grid end; default 10^6 max(1, M).
    #[arg(long)]
    pub fit_hi: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_FIT_POINTS)]
    pub fit_points: usize,
    /// Agreement tolerance on the exponent.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE, value_parser = positive)]
    pub tolerance: f64,
    #[arg(long, default_value_t = DEFAULT_QUAD_TOL, value_parser = positive)]
    pub quad_tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    /// Augmented sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "200,500,1000")]
    pub m_values: Vec<u64>,
    #[arg(long, default_value_t = 101_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub thin: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "uniform")]
    pub psi_prior: PsiArg,
    /// Beta prior on p: first shape.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub p_a: f64,
    /// Beta prior on p: second shape.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub p_b: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV (M, mean_N, sd_N, ess) for plotting.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct YmArgs {
    /// Distinct individuals observed across the lists.
    #[arg(long)]
    pub n: u64,
    /// Number of multinomial cells.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub k: u64,
    #[arg(long, value_parser = positive)]
    pub delta: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    pub prior: PriorArg,
    #[arg(long, default_value_t = 100_000)]
    pub n_max: u64,
    #[arg(long, default_value_t = DEFAULT_LEVEL, value_parser = level)]
    pub level: f64,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
