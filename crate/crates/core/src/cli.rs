//! Command-line front end: `estimate`, `simulate` and `oracle`.
//!
//! Exit codes: 0 on success, 2 on invalid input or configuration, 3 when
//! estimation itself fails.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimators::{estimate, Estimand, EstimateReport, IntervalKind, Method};
use crate::inference::{bootstrap, BootstrapSpec};
use crate::learners::FeatureMode;
use crate::nuisance::{LearnerConfig, OutcomeFamily, RecursionMode};
use crate::oracle::{enumerate_truth, ExactPopulation, OracleTruth};
use crate::panel::{CovariateSchema, PanelDataset};
use crate::simlab::{
    run_study, truths, CovariateMode, DgpConfig, LearnerMode, OutcomeKind, SimulationConfig,
    STANDARD_ESTIMANDS,
};

/// Risk sets smaller than this trigger a warning.
pub const SMALL_RISK_SET: usize = 30;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ESTIMATION: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "selig",
    version,
    about = "Treatment effects under selective eligibility"
)]
pub struct Cli {
    /// Worker threads (falls back to SELIG_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate effects from a panel CSV
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study on the built-in design
    Simulate(SimulateArgs),
    /// Ground-truth values from a finite population or the simulation design
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Features {
    Main,
    History,
    Saturated,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Recursion {
    Product,
    Direct,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Family {
    Auto,
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum IntervalArg {
    Percentile,
    Normal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Reg,
    Ipw,
    Dr,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Reg => Method::Reg,
            MethodArg::Ipw => Method::Ipw,
            MethodArg::Dr => Method::Dr,
        }
    }
}

#[derive(Args, Debug)]
struct LearnerArgs {
    /// Feature map of every nuisance model
    #[arg(long, value_enum, default_value = "main")]
    features: Features,

    /// How the regression recursion handles eligibility
    #[arg(long, value_enum, default_value = "product")]
    recursion: Recursion,

    /// Always fit the recursion, even with time-invariant covariates
    #[arg(long)]
    no_shortcut: bool,

    /// Outcome model family
    #[arg(long, value_enum, default_value = "auto")]
    outcome_family: Family,

    /// Covariates left out of the propensity models (comma-separated)
    #[arg(long, value_delimiter = ',')]
    exclude_propensity: Vec<String>,

    /// Covariates left out of the outcome and eligibility models
    #[arg(long, value_delimiter = ',')]
    exclude_outcome: Vec<String>,

    /// Cross-fit the nuisance models over K folds
    #[arg(long)]
    crossfit: Option<usize>,
}

impl LearnerArgs {
    fn config(&self, seed: u64) -> LearnerConfig {
        LearnerConfig {
            features: match self.features {
                Features::Main => FeatureMode::MainEffects,
                Features::History => FeatureMode::HistorySaturated,
                Features::Saturated => FeatureMode::Saturated,
            },
            recursion: match self.recursion {
                Recursion::Product => RecursionMode::Product,
                Recursion::Direct => RecursionMode::Direct,
            },
            invariant_shortcut: !self.no_shortcut,
            outcome_family: match self.outcome_family {
                Family::Auto => OutcomeFamily::Auto,
                Family::Linear => OutcomeFamily::Linear,
                Family::Logistic => OutcomeFamily::Logistic,
            },
            exclude_propensity: self.exclude_propensity.clone(),
            exclude_outcome: self.exclude_outcome.clone(),
            crossfit_folds: self.crossfit,
            crossfit_seed: seed,
        }
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Long-format panel CSV
    #[arg(long)]
    data: PathBuf,

    /// Covariate schema JSON
    #[arg(long)]
    schema: PathBuf,

    /// Estimand: tau@t:history, tau@t:*, theta:policy or theta:@file (repeatable)
    #[arg(long = "estimand", required = true)]
    estimands: Vec<String>,

    /// Estimators (comma-separated)
    #[arg(
        long = "method",
        value_enum,
        value_delimiter = ',',
        default_value = "dr"
    )]
    methods: Vec<MethodArg>,

    #[command(flatten)]
    learners: LearnerArgs,

    /// Bootstrap replicates; 0 skips intervals
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,

    /// Confidence level
    #[arg(long, default_value_t = 0.95)]
    level: f64,

    /// Interval type
    #[arg(long, value_enum, default_value = "percentile")]
    interval: IntervalArg,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutcomeArg {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CovariateArg {
    Correct,
    Misspecified,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LearnerModeArg {
    Parametric,
    Saturated,
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Outcome feedback strength (0 or 0.5)
    #[arg(long, default_value_t = 0.0)]
    delta: f64,

    #[arg(long, value_enum, default_value = "continuous")]
    outcome: OutcomeArg,

    /// Standard deviation of the Normal outcome noise
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
}

impl DesignArgs {
    fn dgp(&self) -> DgpConfig {
        DgpConfig {
            delta: self.delta,
            outcome: match self.outcome {
                OutcomeArg::Continuous => OutcomeKind::Continuous,
                OutcomeArg::Binary => OutcomeKind::Binary,
            },
            noise_sd: self.noise_sd,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,

    #[arg(long, default_value_t = 500)]
    reps: usize,

    #[command(flatten)]
    design: DesignArgs,

    #[arg(long, value_enum, default_value = "correct")]
    covariates: CovariateArg,

    #[arg(long, value_enum, default_value = "parametric")]
    learners: LearnerModeArg,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Draws for the Monte Carlo truths
    #[arg(long, default_value_t = 10_000_000)]
    truth_draws: u64,

    /// Estimands (default: the nine standard ones)
    #[arg(long = "estimand")]
    estimands: Vec<String>,

    #[arg(
        long = "method",
        value_enum,
        value_delimiter = ',',
        default_value = "reg,ipw,dr"
    )]
    methods: Vec<MethodArg>,

    /// Covariates withheld from the propensity models
    #[arg(long, value_delimiter = ',')]
    exclude_propensity: Vec<String>,

    /// Covariates withheld from the outcome and eligibility models
    #[arg(long, value_delimiter = ',')]
    exclude_outcome: Vec<String>,

    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Population file, or the built-in `d1` / `d2`
    #[arg(long, conflicts_with = "dgp")]
    population: Option<String>,

    /// Use the simulation design instead of a population
    #[arg(long, value_enum)]
    dgp: Option<OutcomeArg>,

    #[arg(long, default_value_t = 0.0)]
    delta: f64,

    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,

    #[arg(long, default_value_t = 10_000_000)]
    draws: u64,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Enumerate in floating point instead of exact rationals
    #[arg(long)]
    float: bool,

    #[arg(long = "estimand", required = true)]
    estimands: Vec<String>,

    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Parses arguments, runs, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_INVALID
    } else {
        EXIT_ESTIMATION
    }
}

/// `--threads`, then `SELIG_THREADS`, then rayon's default.
fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("SELIG_THREADS") {
            Ok(v) if !v.trim().is_empty() => Some(v.trim().parse::<usize>().map_err(|_| {
                Error::InvalidConfig(format!("SELIG_THREADS='{v}' is not a thread count"))
            })?),
            _ => None,
        },
    };
    if n == Some(0) {
        return Err(Error::InvalidConfig("thread count must be positive".into()));
    }
    Ok(n)
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads)? {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Oracle(a) => cmd_oracle(&a),
    })
}

fn parse_estimands(specs: &[String]) -> Result<Vec<Estimand>> {
    let mut out = Vec::new();
    for s in specs {
        out.extend(Estimand::parse_many(s)?);
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig("no estimands requested".into()));
    }
    Ok(out)
}

fn methods(args: &[MethodArg]) -> Vec<Method> {
    let mut out: Vec<Method> = args.iter().map(|&m| m.into()).collect();
    out.dedup();
    out
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json value");
    text.push('\n');
    write(path, &text)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

/// `estimates.csv` contents.
pub fn estimates_csv(reports: &[EstimateReport]) -> String {
    csv_text(
        &[
            "estimand",
            "method",
            "estimate",
            "ci_low",
            "ci_high",
            "risk_set_min",
            "clip_count",
            "failed_reps",
        ],
        reports
            .iter()
            .map(|r| {
                vec![
                    r.estimand.label(),
                    r.method.to_string(),
                    r.estimate.to_string(),
                    opt(r.interval.map(|i| i.low)),
                    opt(r.interval.map(|i| i.high)),
                    r.diagnostics.risk_set_min().to_string(),
                    r.diagnostics.clip_count.to_string(),
                    r.diagnostics.failed_reps.to_string(),
                ]
            })
            .collect(),
    )
}

fn warn_small_risk_sets(reports: &[EstimateReport]) {
    for r in reports {
        for (h, n) in &r.diagnostics.risk_sets {
            if *n < SMALL_RISK_SET {
                eprintln!(
                    "warning: {} ({}): only {n} units follow history '{h}'",
                    r.estimand, r.method
                );
            }
        }
    }
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let schema = CovariateSchema::load(&a.schema)?;
    let data = PanelDataset::load_csv(&a.data, &schema)?;
    let estimands = parse_estimands(&a.estimands)?;
    let methods = methods(&a.methods);
    let config = a.learners.config(a.seed);
    let spec = BootstrapSpec {
        replicates: a.bootstrap,
        level: a.level,
        seed: a.seed,
        kind: match a.interval {
            IntervalArg::Percentile => IntervalKind::Percentile,
            IntervalArg::Normal => IntervalKind::Normal,
        },
    };
    if a.bootstrap > 0 {
        spec.validate()?;
    } else if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "confidence level {} outside (0, 1)",
            a.level
        )));
    }
    prepare_out(&a.out)?;
    let reports = if a.bootstrap > 0 {
        bootstrap(&data, &config, &estimands, &methods, &spec)?
    } else {
        estimate(&data, &config, &estimands, &methods)?
    };
    warn_small_risk_sets(&reports);
    let csv = estimates_csv(&reports);
    write(&a.out.join("estimates.csv"), &csv)?;
    let manifest = json!({
        "tool": "selig",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "estimate",
        "data": a.data.display().to_string(),
        "schema": a.schema.display().to_string(),
        "units": data.len(),
        "horizon": data.horizon(),
        "estimands": estimands.iter().map(|e| e.label()).collect::<Vec<_>>(),
        "methods": methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
        "learners": config,
        "bootstrap": (a.bootstrap > 0).then_some(spec),
        "seed": a.seed,
        "results": reports.iter().map(|r| json!({
            "estimand": r.estimand.label(),
            "method": r.method,
            "estimate": r.estimate,
            "std_error": r.std_error,
            "denominator": r.denominator,
            "risk_sets": r.diagnostics.risk_sets,
            "fits": r.diagnostics.fits,
        })).collect::<Vec<_>>(),
    });
    write_json(&a.out.join("manifest.json"), &manifest)?;
    print!("{csv}");
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let dgp = a.design.dgp();
    let config = SimulationConfig {
        n: a.n,
        reps: a.reps,
        delta: dgp.delta,
        outcome: dgp.outcome,
        covariates: match a.covariates {
            CovariateArg::Correct => CovariateMode::Correct,
            CovariateArg::Misspecified => CovariateMode::Misspecified,
        },
        learners: match a.learners {
            LearnerModeArg::Parametric => LearnerMode::Parametric,
            LearnerModeArg::Saturated => LearnerMode::Saturated,
        },
        seed: a.seed,
        noise_sd: dgp.noise_sd,
        truth_draws: a.truth_draws,
        exclude_propensity: a.exclude_propensity.clone(),
        exclude_outcome: a.exclude_outcome.clone(),
        estimands: a.estimands.clone(),
    };
    config.validate()?;
    prepare_out(&a.out)?;
    let report = run_study(&config, &methods(&a.methods))?;
    let csv = report.to_csv();
    write(&a.out.join("simulation.csv"), &csv)?;
    let manifest = json!({
        "tool": "selig",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "simulate",
        "label": config.label(),
        "config": config,
        "noise_sd": config.noise_sd,
        "seeds": {
            "replicates": config.seed,
            "truth": config.seed ^ crate::simlab::TRUTH_SEED_SALT,
        },
        "estimands": if config.estimands.is_empty() {
            STANDARD_ESTIMANDS.iter().map(|s| s.to_string()).collect::<Vec<_>>()
        } else {
            config.estimands.clone()
        },
        "rows": report.rows,
    });
    write_json(&a.out.join("manifest.json"), &manifest)?;
    print!("{csv}");
    Ok(())
}

/// `oracle.csv` contents.
pub fn oracle_csv(truths: &[OracleTruth]) -> String {
    csv_text(
        &[
            "estimand",
            "value",
            "exact",
            "method",
            "mc_se",
            "denominator",
        ],
        truths
            .iter()
            .map(|t| {
                vec![
                    t.estimand.clone(),
                    t.value.to_string(),
                    t.exact.clone().unwrap_or_default(),
                    serde_json::to_value(t.method)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    opt(t.mc_se),
                    opt(t.denominator),
                ]
            })
            .collect(),
    )
}

fn cmd_oracle(a: &OracleArgs) -> Result<()> {
    let estimands = parse_estimands(&a.estimands)?;
    let (truths, source) = match (&a.population, a.dgp) {
        (Some(name), None) => {
            let pop = ExactPopulation::builtin_or_load(name)?;
            let truths = if a.float {
                let pop = pop.to_f64();
                estimands
                    .iter()
                    .map(|e| enumerate_truth(&pop, e))
                    .collect::<Result<Vec<_>>>()?
            } else {
                estimands
                    .iter()
                    .map(|e| enumerate_truth(&pop, e))
                    .collect::<Result<Vec<_>>>()?
            };
            (truths, json!({ "population": name, "exact": !a.float }))
        }
        (None, Some(kind)) => {
            let dgp = DesignArgs {
                delta: a.delta,
                outcome: kind,
                noise_sd: a.noise_sd,
            }
            .dgp();
            let probe = SimulationConfig {
                delta: dgp.delta,
                noise_sd: dgp.noise_sd,
                truth_draws: a.draws,
                ..SimulationConfig::default()
            };
            probe.validate()?;
            let truths = truths(&dgp, &estimands, a.draws, a.seed)?;
            (
                truths,
                json!({ "dgp": dgp, "draws": a.draws, "seed": a.seed }),
            )
        }
        _ => {
            return Err(Error::InvalidConfig(
                "oracle needs exactly one of --population or --dgp".into(),
            ))
        }
    };
    prepare_out(&a.out)?;
    let csv = oracle_csv(&truths);
    write(&a.out.join("oracle.csv"), &csv)?;
    let manifest = json!({
        "tool": "selig",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "oracle",
        "source": source,
        "truths": truths,
    });
    write_json(&a.out.join("manifest.json"), &manifest)?;
    print!("{csv}");
    Ok(())
}
