use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use recapture::capture_data::{simulate_m0, simulate_mh, Format};
use recapture::da_mcmc::{m_sweep, DaConfig, PsiPrior};
use recapture::likelihoods::{m0_profile_mle, york_madigan_log_kernel, BetaParams};
use recapture::posterior::{m0_marginal_log_kernel, DetectionPrior, MhMarginal, QuadratureCheck};
use recapture::propriety::{
    propriety_report, theorem1_condition, theorem2_condition, FitConfig, ModelInput,
};
use recapture::{
    CaptureHistory, GammaPrior, NPrior, PosteriorTable, PriorSpec, ProprietyReport,
    SufficientStats, Verdict,
};

use crate::args::{
    AnalyzeArgs, CaptureModel, CheckArgs, CheckModel, FitArgs, PsiArg, SimulateArgs, SweepArgs,
    YmArgs,
};
use crate::error::{CliError, Status};
use crate::manifest::RunManifest;

const M0_DEFAULT_N_MAX: u64 = 100_000;
const MH_DEFAULT_N_MAX: u64 = 10_000;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Output(e.to_string()))
}

fn load_data(path: &Path, k: Option<usize>) -> Result<CaptureHistory, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let data = match Format::from_path(path) {
        Format::Json => CaptureHistory::from_json_reader(file)?,
        Format::Csv => CaptureHistory::from_csv_reader(file, k)?,
    };
    if let Some(k) = k {
        if data.occasions() != k {
            return Err(CliError::Input(format!(
                "dataset has K = {}, but --k {k} was given",
                data.occasions()
            )));
        }
    }
    Ok(data)
}

fn outputs<'a>(paths: &[&'a Option<PathBuf>]) -> Vec<&'a PathBuf> {
    paths.iter().filter_map(|p| p.as_ref()).collect()
}

pub fn simulate(args: &SimulateArgs) -> Result<Status, CliError> {
    let manifest = RunManifest::new("simulate", args, Some(args.seed))?;
    let k = args.k as usize;
    let data = match args.model {
        CaptureModel::M0 => simulate_m0(args.n, args.p.unwrap_or_default(), k, args.seed)?,
        CaptureModel::Mh => simulate_mh(
            args.n,
            args.alpha.unwrap_or_default(),
            args.beta.unwrap_or_default(),
            k,
            args.seed,
        )?,
    };
    let mut w = create(&args.out)?;
    match Format::from_path(&args.out) {
        Format::Json => data.to_json_writer(&mut w)?,
        Format::Csv => data.to_csv_writer(&mut w)?,
    }
    w.flush().map_err(|e| CliError::Output(e.to_string()))?;
    manifest.finish(&[&args.out])?;
    let s = data.summarize();
    println!(
        "simulated {} of {} individuals over K={} occasions (n.={}, r={}) -> {}",
        s.m,
        args.n,
        s.k,
        s.n_dot,
        s.recaptures(),
        args.out.display()
    );
    Ok(Status::Ok)
}

#[derive(Debug, Serialize)]
struct Mle {
    n_hat: u64,
    p_hat: f64,
}

#[derive(Debug, Serialize)]
struct AnalyzeReport {
    model: CaptureModel,
    prior: PriorSpec,
    m: u64,
    n_dot: u64,
    k: u64,
    recaptures: u64,
    analytic_exponent: f64,
    verdict: Verdict,
    profile_mle: Option<Mle>,
    quadrature: Vec<QuadratureCheck>,
    table: PosteriorTable,
}

pub fn analyze(args: &AnalyzeArgs) -> Result<Status, CliError> {
    let manifest = RunManifest::new("analyze", args, None)?.with_input(&args.data)?;
    let data = load_data(&args.data, args.k)?;
    let stats = data.summarize();
    let n_prior: NPrior = args.prior.into();
    let n_min = n_prior.support_start(stats.m);
    let default_max = match args.model {
        CaptureModel::M0 => M0_DEFAULT_N_MAX,
        CaptureModel::Mh => MH_DEFAULT_N_MAX,
    };
    let n_max = args.n_max.unwrap_or(default_max.max(10 * stats.m));
    if n_max < n_min {
        return Err(CliError::Input(format!(
            "--n-max {n_max} is below the support start {n_min}"
        )));
    }

    let (detection, analytic, verdict, quadrature, table, profile_mle) = match args.model {
        CaptureModel::M0 => {
            let beta = BetaParams::new(args.a, args.b)?;
            let (d, verdict) = theorem1_condition(&stats, beta.a, n_prior);
            let table = PosteriorTable::build(
                |n| m0_marginal_log_kernel(n, &stats, beta),
                n_prior,
                n_min,
                n_max,
                args.level,
            )?;
            let mle = m0_profile_mle(&stats)
                .ok()
                .map(|(n_hat, p_hat)| Mle { n_hat, p_hat });
            (
                DetectionPrior::Beta(beta),
                d,
                verdict,
                Vec::new(),
                table,
                mle,
            )
        }
        CaptureModel::Mh => {
            let prior = GammaPrior::new(args.gamma_a, args.gamma_b, args.gamma_c)?;
            let mh = MhMarginal::with_orders(
                &stats,
                prior,
                args.quad.quad_order,
                args.quad.check_order,
            )?;
            let checks: Vec<QuadratureCheck> =
                [n_min, n_max].iter().map(|&n| mh.check(n)).collect();
            for c in &checks {
                println!(
                    "quadrature {}x{} vs {}x{} at N={}: relative change {:.2e}",
                    c.coarse_order, c.coarse_order, c.fine_order, c.fine_order, c.n, c.rel_change
                );
            }
            if let Some(bad) = checks
                .iter()
                .find(|c| c.rel_change.is_nan() || c.rel_change > args.quad.quad_tol)
            {
                return Err(recapture::Error::QuadratureNonConvergence {
                    n: bad.n,
                    coarse: bad.coarse,
                    fine: bad.fine,
                    rel_change: bad.rel_change,
                    tolerance: args.quad.quad_tol,
                }
                .into());
            }
            let verdict = theorem2_condition(prior.a, n_prior);
            let table =
                PosteriorTable::build(|n| mh.log_kernel(n), n_prior, n_min, n_max, args.level)?;
            (
                DetectionPrior::Gamma(prior),
                prior.a,
                verdict,
                checks,
                table,
                None,
            )
        }
    };

    println!(
        "model {:?}, {} prior on N, M={}, n.={}, K={}, r={}",
        args.model,
        n_prior,
        stats.m,
        stats.n_dot,
        stats.k,
        stats.recaptures()
    );
    if let Some(mle) = &profile_mle {
        println!("profile MLE: N_hat={}, p_hat={:.6}", mle.n_hat, mle.p_hat);
    }
    println!(
        "posterior mean {:.4}, sd {:.4}, {:.0}% interval [{}, {}] on support [{}, {}]",
        table.mean,
        table.sd,
        100.0 * table.level,
        table.ci[0],
        table.ci[1],
        table.support[0],
        table.support[1]
    );
    match (table.tail_mass_estimate, table.tail) {
        (Some(tau), Some(t)) => println!(
            "tail beyond N_max: mass {tau:.3e}, fitted exponent {:.4}",
            t.exponent
        ),
        _ => println!("tail beyond N_max: not estimated"),
    }
    println!("analytic exponent {analytic:.4}: {verdict}");

    let doubtful = !verdict.is_proper() || table.likely_improper();
    if doubtful {
        eprintln!("WARNING: posterior propriety is doubtful ({verdict}); the truncated summaries depend on N_max");
    }
    for w in &table.warnings {
        eprintln!("WARNING: {w}");
    }

    let report = AnalyzeReport {
        model: args.model,
        prior: PriorSpec { n_prior, detection },
        m: stats.m,
        n_dot: stats.n_dot,
        k: stats.k,
        recaptures: stats.recaptures(),
        analytic_exponent: analytic,
        verdict,
        profile_mle,
        quadrature,
        table,
    };
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    if let Some(path) = &args.csv {
        let mut w = create(path)?;
        report.table.to_csv_writer(&mut w)?;
    }
    manifest.finish(&outputs(&[&args.out, &args.csv]))?;
    Ok(if doubtful {
        Status::ProprietyWarning
    } else {
        Status::Ok
    })
}

/// Check scenario as read from a file; every field is optional so the flag
/// path can fill the same structure.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// `m0`, `mh`, `ym` or `synthetic`.
    pub model: String,
    #[serde(default)]
    pub n_prior: Option<NPrior>,
    pub data: Option<PathBuf>,
    pub counts: Option<Vec<u64>>,
    pub m: Option<u64>,
    pub n_dot: Option<u64>,
    pub n_obs: Option<u64>,
    pub k: Option<u64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub delta: Option<f64>,
    pub exponent: Option<f64>,
}

fn need<T>(v: Option<T>, what: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Input(format!("scenario is missing `{what}`")))
}

/// Spreads `n_dot` captures over `m` individuals, at most `k` each.
fn stats_from_totals(m: u64, n_dot: u64, k: u64) -> Result<SufficientStats, CliError> {
    if m == 0 || n_dot < m || n_dot > m * k {
        return Err(CliError::Input(format!(
            "need 1 <= M <= n. <= K M, got M={m}, n.={n_dot}, K={k}"
        )));
    }
    let mut counts = vec![1u64; m as usize];
    let mut left = n_dot - m;
    for c in counts.iter_mut() {
        let add = left.min(k - 1);
        *c += add;
        left -= add;
    }
    Ok(CaptureHistory::from_capture_counts(k as usize, &counts)?.summarize())
}

impl Scenario {
    fn stats(&self, base: Option<&Path>) -> Result<SufficientStats, CliError> {
        if let Some(path) = &self.data {
            let resolved = match base {
                Some(dir) if path.is_relative() && !path.exists() => dir.join(path),
                _ => path.clone(),
            };
            return Ok(load_data(&resolved, self.k.map(|k| k as usize))?.summarize());
        }
        if let Some(counts) = &self.counts {
            let k = need(self.k, "k")?;
            return Ok(CaptureHistory::from_capture_counts(k as usize, counts)?.summarize());
        }
        stats_from_totals(
            need(self.m, "m")?,
            need(self.n_dot, "n_dot")?,
            need(self.k, "k")?,
        )
    }

    fn input(&self, base: Option<&Path>) -> Result<ModelInput, CliError> {
        let a = self.a.unwrap_or(1.0);
        let b = self.b.unwrap_or(1.0);
        Ok(match self.model.as_str() {
            "m0" => ModelInput::M0 {
                stats: self.stats(base)?,
                beta: BetaParams::new(a, b)?,
            },
            "mh" => ModelInput::Mh {
                stats: self.stats(base)?,
                prior: GammaPrior::new(a, b, self.c.unwrap_or(1.0))?,
            },
            "ym" => ModelInput::YorkMadigan {
                n_obs: need(self.n_obs.or(self.m), "n_obs")?,
                k: need(self.k, "k")?,
                delta: need(self.delta, "delta")?,
            },
            "synthetic" => ModelInput::Synthetic {
                exponent: need(self.exponent, "exponent")?,
            },
            other => return Err(CliError::Input(format!("unknown model `{other}`"))),
        })
    }
}

impl FitArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            lo: self.fit_lo,
            hi: self.fit_hi,
            points: self.fit_points,
            tolerance: self.tolerance,
            quad_tolerance: self.quad_tol,
        }
    }
}

fn scenario_from_flags(args: &CheckArgs) -> Result<Scenario, CliError> {
    let model = match (args.synthetic_exponent, args.model) {
        (Some(_), _) => "synthetic",
        (None, Some(CheckModel::M0)) => "m0",
        (None, Some(CheckModel::Mh)) => "mh",
        (None, Some(CheckModel::Ym)) => "ym",
        (None, None) => {
            return Err(CliError::Input(
                "one of --scenario, --model or --synthetic-exponent is required".into(),
            ))
        }
    };
    Ok(Scenario {
        model: model.to_string(),
        n_prior: Some(args.prior.into()),
        data: args.data.clone(),
        counts: None,
        m: args.m,
        n_dot: args.n_dot,
        n_obs: None,
        k: args.k,
        a: Some(args.a),
        b: Some(args.b),
        c: Some(args.c),
        delta: args.delta,
        exponent: args.synthetic_exponent,
    })
}

fn print_report(report: &ProprietyReport) {
    println!(
        "{:?}, {} prior: analytic exponent {:.4} (total {:.4}) -> {}",
        report.model,
        report.n_prior,
        report.analytic_exponent,
        report.total_analytic_exponent,
        report.predicted
    );
    match (report.fitted_exponent, report.fitted_se) {
        (Some(d), Some(se)) => println!(
            "fitted exponent {d:.4} (se {se:.1e}) on [{}, {}]; agreement: {}",
            report.fit_range[0], report.fit_range[1], report.agreement
        ),
        _ => println!(
            "fit failed: {}",
            report.fit_error.as_deref().unwrap_or("unknown")
        ),
    }
    for c in &report.quadrature {
        println!(
            "quadrature check at N={}: relative change {:.2e}",
            c.n, c.rel_change
        );
    }
}

pub fn check_propriety(args: &CheckArgs) -> Result<Status, CliError> {
    let mut manifest = RunManifest::new("check-propriety", args, None)?;
    let (scenario, base) = match &args.scenario {
        Some(path) => {
            manifest = manifest.with_input(path)?;
            let file = File::open(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let s: Scenario = serde_json::from_reader(file)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            (s, path.parent().map(Path::to_path_buf))
        }
        None => {
            if let Some(data) = &args.data {
                manifest = manifest.with_input(data)?;
            }
            (scenario_from_flags(args)?, None)
        }
    };
    let input = scenario.input(base.as_deref())?;
    let n_prior = scenario.n_prior.unwrap_or(NPrior::Uniform);
    let report = propriety_report(&input, n_prior, &args.fit.config())?;
    print_report(&report);

    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    if let Some(path) = &args.csv {
        let mut w = create(path)?;
        report.to_csv_writer(&mut w)?;
    }
    manifest.finish(&outputs(&[&args.out, &args.csv]))?;

    if report
        .quadrature
        .iter()
        .any(|c| c.rel_change.is_nan() || c.rel_change > args.fit.quad_tol)
    {
        return Err(CliError::Numeric(report.fit_error.unwrap_or_default()));
    }
    if report.agreement {
        Ok(Status::Ok)
    } else {
        eprintln!("analytic and fitted exponents disagree");
        Ok(Status::Disagreement)
    }
}

pub fn da_sweep(args: &SweepArgs) -> Result<Status, CliError> {
    let manifest = RunManifest::new("da-sweep", args, Some(args.seed))?.with_input(&args.data)?;
    let data = load_data(&args.data, args.k)?;
    let psi_prior = match args.psi_prior {
        PsiArg::Uniform => PsiPrior::uniform(),
        PsiArg::Scale => {
            eprintln!("note: Beta(0.001, 1) on psi only approximates a 1/N prior on N");
            PsiPrior::approximate_scale()
        }
    };
    let base = DaConfig {
        m: 0,
        iters: args.iters,
        burnin: args.burnin,
        thin: args.thin as usize,
        seed: args.seed,
        stream: 0,
        psi_prior,
        p_prior: BetaParams::new(args.p_a, args.p_b)?,
    };
    let report = m_sweep(&data, &args.m_values, &base)?;
    println!("{:>8} {:>12} {:>10} {:>10}", "M", "mean_N", "sd_N", "ess");
    for e in &report.entries {
        println!(
            "{:>8} {:>12.3} {:>10.3} {:>10.0}",
            e.m, e.mean_n, e.sd_n, e.ess
        );
    }
    println!(
        "slope {:.4e} (se {:.2e}, z {:.1}); relative change {:.2}% -> {}; sd ratio last/first {:.3}",
        report.slope,
        report.slope_se,
        report.slope_z,
        100.0 * report.relative_change,
        if report.stable { "stable" } else { "not stable" },
        report.sd_ratio
    );
    if let Some(path) = &args.out {
        let mut w = create(path)?;
        report.to_json_writer(&mut w)?;
        writeln!(w).map_err(|e| CliError::Output(e.to_string()))?;
    }
    if let Some(path) = &args.csv {
        let mut w = create(path)?;
        report.to_csv_writer(&mut w)?;
    }
    manifest.finish(&outputs(&[&args.out, &args.csv]))?;
    Ok(Status::Ok)
}

#[derive(Debug, Serialize)]
struct YmReport {
    table: PosteriorTable,
    propriety: ProprietyReport,
}

pub fn ym(args: &YmArgs) -> Result<Status, CliError> {
    let manifest = RunManifest::new("ym", args, None)?;
    let n_prior: NPrior = args.prior.into();
    let input = ModelInput::YorkMadigan {
        n_obs: args.n,
        k: args.k,
        delta: args.delta,
    };
    let propriety = propriety_report(&input, n_prior, &args.fit.config())?;
    let n_min = n_prior.support_start(args.n);
    if args.n_max < n_min {
        return Err(CliError::Input(format!(
            "--n-max {} is below the support start {n_min}",
            args.n_max
        )));
    }
    let (n_obs, k, delta) = (args.n, args.k, args.delta);
    york_madigan_log_kernel(n_min, n_obs, k, delta)?;
    let table = PosteriorTable::build(
        |n| york_madigan_log_kernel(n, n_obs, k, delta).unwrap_or(f64::NAN),
        n_prior,
        n_min,
        args.n_max,
        args.level,
    )?;
    print_report(&propriety);
    println!(
        "posterior mean {:.4}, sd {:.4}, {:.0}% interval [{}, {}] on support [{}, {}]",
        table.mean,
        table.sd,
        100.0 * table.level,
        table.ci[0],
        table.ci[1],
        table.support[0],
        table.support[1]
    );
    let status = if !propriety.agreement {
        eprintln!("analytic and fitted exponents disagree");
        Status::Disagreement
    } else if !propriety.predicted.is_proper() || table.likely_improper() {
        eprintln!(
            "WARNING: posterior is improper ({}); truncated summaries depend on N_max",
            propriety.predicted
        );
        Status::ProprietyWarning
    } else {
        Status::Ok
    };
    let report = YmReport { table, propriety };
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    if let Some(path) = &args.csv {
        let mut w = create(path)?;
        report.table.to_csv_writer(&mut w)?;
    }
    manifest.finish(&outputs(&[&args.out, &args.csv]))?;
    Ok(status)
}
