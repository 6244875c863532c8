//! Three-period simulation design with four Normal confounders, selective
//! eligibility and optional outcome feedback, plus a Monte Carlo study
//! runner reporting bias, RMSE and Monte Carlo standard errors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_one, requirements, Estimand, Method};
use crate::learners::{sigmoid, FeatureMode};
use crate::nuisance::{FittedNuisance, LearnerConfig};
use crate::oracle::{mc_truths, OracleTruth};
use crate::panel::{CovariateSchema, PanelDataset, Period, UnitRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateMode {
    Correct,
    Misspecified,
}

/// Nuisance model families used by the study runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerMode {
    /// Treatment-history cells plus covariate main effects; correctly
    /// specified for this design when the true covariates are used.
    Parametric,
    /// One cell per distinct (history, covariate) pattern; only sensible
    /// for discrete covariates.
    Saturated,
}

impl LearnerMode {
    pub fn features(self) -> FeatureMode {
        match self {
            LearnerMode::Parametric => FeatureMode::HistorySaturated,
            LearnerMode::Saturated => FeatureMode::Saturated,
        }
    }
}

/// Parameters of the data-generating process itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    /// Strength of the lagged-outcome feedback into treatment and outcome.
    pub delta: f64,
    pub outcome: OutcomeKind,
    /// Standard deviation of the Normal outcome noise (continuous outcomes).
    pub noise_sd: f64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            delta: 0.0,
            outcome: OutcomeKind::Continuous,
            noise_sd: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub reps: usize,
    pub delta: f64,
    pub outcome: OutcomeKind,
    pub covariates: CovariateMode,
    pub learners: LearnerMode,
    pub seed: u64,
    pub noise_sd: f64,
    /// Draws used by the Monte Carlo truth oracle.
    pub truth_draws: u64,
    /// Covariates withheld from the propensity models.
    pub exclude_propensity: Vec<String>,
    /// Covariates withheld from the outcome and eligibility models.
    pub exclude_outcome: Vec<String>,
    /// Estimands to evaluate; empty means the standard nine.
    pub estimands: Vec<String>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            reps: 500,
            delta: 0.0,
            outcome: OutcomeKind::Continuous,
            covariates: CovariateMode::Correct,
            learners: LearnerMode::Parametric,
            seed: 1,
            noise_sd: 1.0,
            truth_draws: 10_000_000,
            exclude_propensity: Vec::new(),
            exclude_outcome: Vec::new(),
            estimands: Vec::new(),
        }
    }
}

/// The nine standard estimands: `tau_1`, `tau_2(.)`, `tau_3(.,.)`, `theta_0`, `theta_1`.
pub const STANDARD_ESTIMANDS: [&str; 9] = [
    "tau@1:",
    "tau@2:0",
    "tau@2:1",
    "tau@3:00",
    "tau@3:01",
    "tau@3:10",
    "tau@3:11",
    "theta:all:0",
    "theta:all:1",
];

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.delta != 0.0 && self.delta != 0.5 {
            return Err(Error::InvalidConfig(format!(
                "delta must be 0 or 0.5, got {}",
                self.delta
            )));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd > 0.0) {
            return Err(Error::InvalidConfig("noise_sd must be positive".into()));
        }
        if self.truth_draws == 0 {
            return Err(Error::InvalidConfig(
                "truth_draws must be at least 1".into(),
            ));
        }
        self.parsed_estimands().map(|_| ())
    }

    pub fn dgp(&self) -> DgpConfig {
        DgpConfig {
            delta: self.delta,
            outcome: self.outcome,
            noise_sd: self.noise_sd,
        }
    }

    pub fn parsed_estimands(&self) -> Result<Vec<Estimand>> {
        if self.estimands.is_empty() {
            STANDARD_ESTIMANDS
                .iter()
                .map(|s| Estimand::parse(s))
                .collect()
        } else {
            let mut out = Vec::new();
            for s in &self.estimands {
                out.extend(Estimand::parse_many(s)?);
            }
            Ok(out)
        }
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            features: self.learners.features(),
            exclude_propensity: self.exclude_propensity.clone(),
            exclude_outcome: self.exclude_outcome.clone(),
            ..LearnerConfig::default()
        }
    }

    /// `CorP` / `MisP` style label of the cell.
    pub fn label(&self) -> String {
        let cov = match self.covariates {
            CovariateMode::Correct => "Cor",
            CovariateMode::Misspecified => "Mis",
        };
        let learn = match self.learners {
            LearnerMode::Parametric => "P",
            LearnerMode::Saturated => "S",
        };
        format!("{cov}{learn}")
    }
}

/// Every potential outcome and eligibility indicator of one unit.
/// Arrays are indexed by the history read as a binary number.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub x: [f64; 4],
    pub y1: [f64; 2],
    pub s2: [bool; 2],
    pub y2: [f64; 4],
    pub s3: [bool; 4],
    pub y3: [f64; 8],
    /// Uniforms driving the observed treatment draws.
    u_z: [f64; 3],
}

impl Potentials {
    /// `Y_t(z̄_t)`.
    pub fn y(&self, zbar: &[u8]) -> f64 {
        let i = index(zbar);
        match zbar.len() {
            1 => self.y1[i],
            2 => self.y2[i],
            3 => self.y3[i],
            t => panic!("no period {t} in this design"),
        }
    }

    /// `S_t(z̄_{t-1})`.
    pub fn s(&self, prev: &[u8]) -> bool {
        let i = index(prev);
        match prev.len() {
            0 => true,
            1 => self.s2[i],
            2 => self.s3[i],
            t => panic!("no period {} in this design", t + 1),
        }
    }
}

fn index(zbar: &[u8]) -> usize {
    zbar.iter().fold(0, |a, &b| (a << 1) | b as usize)
}

/// Draws one unit's potential outcomes. The random stream is consumed in a
/// fixed order so draws are reproducible.
pub fn draw_potentials<R: Rng + ?Sized>(cfg: &DgpConfig, rng: &mut R) -> Potentials {
    let x: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let noise: [f64; 3] = std::array::from_fn(|_| match cfg.outcome {
        OutcomeKind::Continuous => cfg.noise_sd * rng.sample::<f64, _>(StandardNormal),
        OutcomeKind::Binary => rng.random::<f64>(),
    });
    let u_s: [f64; 2] = std::array::from_fn(|_| rng.random::<f64>());
    let u_z: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
    let [x1, x2, x3, x4] = x;
    let d = cfg.delta;
    let outcome = |lin: f64, e: f64| match cfg.outcome {
        OutcomeKind::Continuous => lin + e,
        OutcomeKind::Binary => (e < sigmoid(lin)) as u8 as f64,
    };

    let y1: [f64; 2] = std::array::from_fn(|z1| {
        let z1 = z1 as f64;
        outcome(-1.0 + z1 + 0.5 * x1 - x3, noise[0])
    });
    let s2: [bool; 2] =
        std::array::from_fn(|z1| u_s[0] < sigmoid(1.0 + z1 as f64 + 0.5 * x2 - 0.5 * x3 - x4));
    let y2: [f64; 4] = std::array::from_fn(|i| {
        let (z1, z2) = ((i >> 1) as f64, (i & 1) as f64);
        outcome(
            -0.5 - 0.5 * z1 - 0.5 * z1 * z2 + x2 - 0.5 * x4 + d * y1[i >> 1],
            noise[1],
        )
    });
    let s3: [bool; 4] = std::array::from_fn(|i| {
        let (z1, z2) = ((i >> 1) as f64, (i & 1) as f64);
        s2[i >> 1] && u_s[1] < sigmoid(1.0 - 0.5 * z1 - z2 + 0.5 * x2 - x3)
    });
    let y3: [f64; 8] = std::array::from_fn(|i| {
        let (z2, z3) = (((i >> 1) & 1) as f64, (i & 1) as f64);
        outcome(
            -1.0 - 0.5 * z2 - z3 + 0.5 * z2 * z3 + x1 - 0.5 * x3 - d * y2[i >> 1],
            noise[2],
        )
    });
    Potentials {
        x,
        y1,
        s2,
        y2,
        s3,
        y3,
        u_z,
    }
}

/// Observed treatments along the unit's realized path (length = number of
/// eligible periods).
pub fn observed_treatments(cfg: &DgpConfig, p: &Potentials) -> Vec<u8> {
    let [x1, x2, x3, x4] = p.x;
    let d = cfg.delta;
    let z1 = (p.u_z[0] < sigmoid(0.2 + 0.2 * x1 - 0.4 * x2)) as u8;
    let mut z = vec![z1];
    if !p.s(&z) {
        return z;
    }
    let y1 = p.y(&z);
    let z2 = (p.u_z[1] < sigmoid(0.5 - 0.5 * z1 as f64 + 0.5 * x2 - 0.5 * x4 + d * y1)) as u8;
    z.push(z2);
    if !p.s(&z) {
        return z;
    }
    let y2 = p.y(&z);
    let z3 = (p.u_z[2]
        < sigmoid(1.0 - 0.2 * z1 as f64 - 0.5 * z2 as f64 + 0.5 * x1 + 0.5 * x3 + d * y2))
        as u8;
    z.push(z3);
    z
}

/// The transformed covariates handed to misspecified learners.
pub fn misspecify(x: &[f64; 4]) -> [f64; 4] {
    let [x1, x2, x3, x4] = *x;
    [
        (x1 / 2.0).exp(),
        x2 / (1.0 + x1.exp()) + 10.0,
        (x1 * x3 / 25.0 + 0.6).powi(3),
        (x1 + x4 + 20.0).powi(2),
    ]
}

/// Observed panel built from drawn potentials. With feedback (`delta != 0`)
/// the lagged outcome enters as the time-varying covariate `ylag`.
pub fn observe(
    cfg: &DgpConfig,
    covariates: CovariateMode,
    pots: &[Potentials],
) -> Result<PanelDataset> {
    let feedback = cfg.delta != 0.0;
    let schema = if feedback {
        CovariateSchema::new(&["x1", "x2", "x3", "x4"], &["ylag"])
    } else {
        CovariateSchema::new(&["x1", "x2", "x3", "x4"], &[])
    };
    let units = pots
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let z = observed_treatments(cfg, p);
            let mut lag = 0.0;
            let periods = (1..=z.len())
                .map(|t| {
                    let y = p.y(&z[..t]);
                    let period = Period {
                        treatment: z[t - 1],
                        outcome: y,
                        covariates: if feedback { vec![lag] } else { vec![] },
                    };
                    lag = y;
                    period
                })
                .collect();
            let baseline = match covariates {
                CovariateMode::Correct => p.x.to_vec(),
                CovariateMode::Misspecified => misspecify(&p.x).to_vec(),
            };
            UnitRecord {
                id: format!("u{i}"),
                baseline,
                periods,
            }
        })
        .collect();
    PanelDataset::new(schema, units)
}

/// Draws `n` units: the observed panel and the hidden potential outcomes.
pub fn generate_with<R: Rng + ?Sized>(
    cfg: &DgpConfig,
    covariates: CovariateMode,
    n: usize,
    rng: &mut R,
) -> Result<(PanelDataset, Vec<Potentials>)> {
    let pots: Vec<Potentials> = (0..n).map(|_| draw_potentials(cfg, rng)).collect();
    let data = observe(cfg, covariates, &pots)?;
    Ok((data, pots))
}

/// One draw of the configured design, seeded by `config.seed`.
pub fn generate(config: &SimulationConfig) -> Result<(PanelDataset, Vec<Potentials>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    generate_with(&config.dgp(), config.covariates, config.n, &mut rng)
}

/// Closed-form truth where the design makes it constant: `tau` for
/// continuous outcomes (the feedback terms cancel in the contrasts).
pub fn analytic_truth(cfg: &DgpConfig, estimand: &Estimand) -> Option<f64> {
    if cfg.outcome != OutcomeKind::Continuous {
        return None;
    }
    match estimand {
        Estimand::Ete { t: 1, .. } => Some(1.0),
        Estimand::Ete { t: 2, history } => Some(-0.5 * history.bits()[0] as f64),
        Estimand::Ete { t: 3, history } => Some(-1.0 + 0.5 * history.bits()[1] as f64),
        _ => None,
    }
}

/// Truths for the estimands: analytic where available, otherwise the Monte
/// Carlo oracle. Oracle runs are cached per process.
pub fn truths(
    cfg: &DgpConfig,
    estimands: &[Estimand],
    draws: u64,
    seed: u64,
) -> Result<Vec<OracleTruth>> {
    static CACHE: OnceLock<Mutex<HashMap<String, OracleTruth>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = |e: &Estimand| {
        format!(
            "{}|{:?}|{}|{}|{draws}|{seed}",
            e.label(),
            cfg.outcome,
            cfg.delta,
            cfg.noise_sd
        )
    };
    let missing: Vec<Estimand> = {
        let guard = cache.lock().expect("truth cache");
        estimands
            .iter()
            .filter(|e| analytic_truth(cfg, e).is_none() && !guard.contains_key(&key(e)))
            .cloned()
            .collect()
    };
    if !missing.is_empty() {
        let fresh = mc_truths(cfg, &missing, draws, seed)?;
        let mut guard = cache.lock().expect("truth cache");
        for (e, t) in missing.iter().zip(fresh) {
            guard.insert(key(e), t);
        }
    }
    let guard = cache.lock().expect("truth cache");
    Ok(estimands
        .iter()
        .map(|e| match analytic_truth(cfg, e) {
            Some(v) => OracleTruth::analytic(e.label(), v),
            None => guard[&key(e)].clone(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub estimand: String,
    pub estimator: Method,
    /// Mean estimate minus truth.
    pub bias: f64,
    pub rmse: f64,
    /// Monte Carlo standard error of the mean estimate, including the
    /// truth's own Monte Carlo error.
    pub mc_se: f64,
    pub truth: f64,
    pub truth_se: f64,
    /// Repetitions in which this estimate could not be computed.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub config: SimulationConfig,
    pub rows: Vec<McRow>,
}

impl McReport {
    pub fn row(&self, estimand: &str, estimator: Method) -> Option<&McRow> {
        self.rows
            .iter()
            .find(|r| r.estimand == estimand && r.estimator == estimator)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimand,estimator,bias,rmse,mc_se,truth,failed\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.estimand, r.estimator, r.bias, r.rmse, r.mc_se, r.truth, r.failed
            );
        }
        out
    }
}

/// Estimates from one repetition: `[estimand][method]`, `None` on failure.
pub type RepEstimates = Vec<Vec<Option<f64>>>;

/// Runs one repetition on stream `rep` of the configured seed.
pub fn run_rep(
    config: &SimulationConfig,
    estimands: &[Estimand],
    methods: &[Method],
    rep: u64,
) -> RepEstimates {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(rep);
    let failed = || vec![vec![None; methods.len()]; estimands.len()];
    let Ok((data, _)) = generate_with(&config.dgp(), config.covariates, config.n, &mut rng) else {
        return failed();
    };
    let learner = config.learner_config();
    let Ok(req) = requirements(estimands, methods, data.horizon()) else {
        return failed();
    };
    let Ok(source) = FittedNuisance::fit(&data, &learner, &req) else {
        return failed();
    };
    estimands
        .iter()
        .map(|e| {
            methods
                .iter()
                .map(|&m| {
                    estimate_one(&data, &source, e, m)
                        .ok()
                        .map(|r| r.estimate)
                        .filter(|v| v.is_finite())
                })
                .collect()
        })
        .collect()
}

/// Monte Carlo study: `reps` independent draws, all three estimators.
pub fn run_study(config: &SimulationConfig, methods: &[Method]) -> Result<McReport> {
    config.validate()?;
    let estimands = config.parsed_estimands()?;
    let truth = truths(
        &config.dgp(),
        &estimands,
        config.truth_draws,
        config.seed ^ TRUTH_SEED_SALT,
    )?;
    let per_rep: Vec<RepEstimates> = (0..config.reps as u64)
        .into_par_iter()
        .map(|r| run_rep(config, &estimands, methods, r))
        .collect();
    let mut rows = Vec::new();
    for (e, est) in estimands.iter().enumerate() {
        for (k, &m) in methods.iter().enumerate() {
            let vals: Vec<f64> = per_rep.iter().filter_map(|r| r[e][k]).collect();
            rows.push(summarize(est.label(), m, &vals, &truth[e], config.reps));
        }
    }
    Ok(McReport {
        config: config.clone(),
        rows,
    })
}

/// Truth draws use a stream family disjoint from the repetitions.
pub const TRUTH_SEED_SALT: u64 = 0x7275_7468_5eed_0001;

fn summarize(estimand: String, m: Method, vals: &[f64], truth: &OracleTruth, reps: usize) -> McRow {
    let k = vals.len();
    let (bias, rmse, mc_se) = if k == 0 {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mean = vals.iter().sum::<f64>() / k as f64;
        let mse = vals.iter().map(|v| (v - truth.value).powi(2)).sum::<f64>() / k as f64;
        let var = if k > 1 {
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64
        } else {
            0.0
        };
        let tse = truth.mc_se.unwrap_or(0.0);
        (
            mean - truth.value,
            mse.sqrt(),
            (var / k as f64 + tse * tse).sqrt(),
        )
    };
    McRow {
        estimand,
        estimator: m,
        bias,
        rmse,
        mc_se,
        truth: truth.value,
        truth_se: truth.mc_se.unwrap_or(0.0),
        failed: reps - k,
    }
}
