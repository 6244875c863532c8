//! Sequential nuisance functions: propensities `w_t`, eligibility
//! probabilities `p_t`, outcome means `mu_t`, and the recursive regression
//! functions `m_YS` and `m_S` built from them.
//!
//! Histories are passed as bit slices (`&[u8]`); a slice of length `k`
//! stands for `z̄_k`.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{fit_linear, fit_logistic, DesignMatrix, FeatureMode, LearnerFit, CLIP};
use crate::panel::{PanelDataset, TreatmentHistory, UnitRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecursionMode {
    /// `m(z̄_k) = E[m(z̄_{k+1}) | S_{k+1} = 1, ..] * p_{k+1}(z̄_k, ..)`.
    #[default]
    Product,
    /// Regress `S_{k+1} m(z̄_{k+1})` directly on the `S_k = 1` rows.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeFamily {
    /// Logistic when the observed outcomes are 0/1 and not all equal,
    /// linear otherwise.
    #[default]
    Auto,
    Linear,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub features: FeatureMode,
    pub recursion: RecursionMode,
    /// Use the closed-form products when every covariate is time-invariant.
    pub invariant_shortcut: bool,
    pub outcome_family: OutcomeFamily,
    /// Covariates left out of the propensity models.
    pub exclude_propensity: Vec<String>,
    /// Covariates left out of the outcome, eligibility and recursion models.
    pub exclude_outcome: Vec<String>,
    /// K-fold cross-fitting by unit; `None` fits once on all units.
    pub crossfit_folds: Option<usize>,
    pub crossfit_seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            features: FeatureMode::MainEffects,
            recursion: RecursionMode::Product,
            invariant_shortcut: true,
            outcome_family: OutcomeFamily::Auto,
            exclude_propensity: Vec::new(),
            exclude_outcome: Vec::new(),
            crossfit_folds: None,
            crossfit_seed: 0,
        }
    }
}

/// Which nuisance pieces a request needs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Requirements {
    /// Fit `w_1..w_k`.
    pub propensity_through: usize,
    /// Targets `z̄_t` of `m_{Y_t S_t}`.
    pub ys_targets: BTreeSet<TreatmentHistory>,
    /// Targets `z̄_{t-1}` (length >= 1) of `m_{S_t}`.
    pub s_targets: BTreeSet<TreatmentHistory>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub fits: usize,
    pub separated: usize,
    pub not_converged: usize,
}

impl FitDiagnostics {
    fn record(&mut self, fit: &LearnerFit) {
        self.fits += 1;
        self.separated += fit.status.separated as usize;
        self.not_converged += !fit.status.converged as usize;
    }

    fn merge(&mut self, other: &FitDiagnostics) {
        self.fits += other.fits;
        self.separated += other.separated;
        self.not_converged += other.not_converged;
    }
}

/// Anything that can evaluate the nuisance functions at a unit's observed
/// covariate history: fitted bundles, cross-fitted bundles, or exact tables.
pub trait NuisanceSource: Sync {
    /// `w_s(z_s | z̄_{s-1}, X̄_s)` with `s = z.len()`; needs `S_s = 1`.
    fn propensity(&self, unit: usize, rec: &UnitRecord, z: &[u8]) -> Result<f64>;

    /// `m_{Y_t S_t}(z̄_k, X̄_k)` for target `z̄_t`, `1 <= k <= t`; needs `S_k = 1`.
    fn m_ys(&self, unit: usize, rec: &UnitRecord, target: &[u8], k: usize) -> Result<f64>;

    /// `m_{S_t}(z̄_k, X̄_k)` for target `z̄_{t-1}`, `1 <= k <= t - 1`; needs `S_k = 1`.
    fn m_s(&self, unit: usize, rec: &UnitRecord, target: &[u8], k: usize) -> Result<f64>;

    fn diagnostics(&self) -> FitDiagnostics {
        FitDiagnostics::default()
    }
}

/// `pi_t(z̄_t, X̄_t) = prod_s w_s`; the empty product is 1.
pub fn propensity_product<N: NuisanceSource + ?Sized>(
    source: &N,
    unit: usize,
    rec: &UnitRecord,
    z: &[u8],
) -> Result<f64> {
    let mut pi = 1.0;
    for s in 1..=z.len() {
        pi *= source.propensity(unit, rec, &z[..s])?;
    }
    Ok(pi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Propensity,
    Outcome,
}

/// Builds design rows for one model: the history part (`hist_len` bits) and
/// the covariates observed through `cov_time`.
#[derive(Debug, Clone)]
struct FeatureMap {
    mode: FeatureMode,
    hist_len: usize,
    cov_time: usize,
    baseline: Vec<usize>,
    varying: Vec<usize>,
    cells: HashMap<Vec<u64>, usize>,
}

impl FeatureMap {
    fn new(
        layout: &Layout,
        family: Family,
        mode: FeatureMode,
        hist_len: usize,
        cov_time: usize,
    ) -> Self {
        let (baseline, varying) = match family {
            Family::Propensity => (layout.prop_baseline.clone(), layout.prop_varying.clone()),
            Family::Outcome => (layout.out_baseline.clone(), layout.out_varying.clone()),
        };
        Self {
            mode,
            hist_len,
            cov_time,
            baseline,
            varying,
            cells: HashMap::new(),
        }
    }

    /// Covariates `X̄_{cov_time}`, or `None` if the unit was not observed then.
    fn covariates(&self, rec: &UnitRecord) -> Option<Vec<f64>> {
        let mut out: Vec<f64> = self.baseline.iter().map(|&j| rec.baseline[j]).collect();
        if !self.varying.is_empty() {
            if rec.eligible_through() < self.cov_time {
                return None;
            }
            for p in &rec.periods[..self.cov_time] {
                out.extend(self.varying.iter().map(|&j| p.covariates[j]));
            }
        }
        Some(out)
    }

    fn cell_key(hist: &[u8], covs: &[f64]) -> Vec<u64> {
        hist.iter()
            .map(|&b| b as u64)
            .chain(covs.iter().map(|v| v.to_bits()))
            .collect()
    }

    fn width(&self) -> usize {
        let n_cov = self.baseline.len() + self.varying.len() * self.cov_time;
        match self.mode {
            FeatureMode::MainEffects => 1 + self.hist_len + n_cov,
            FeatureMode::HistorySaturated => (1 << self.hist_len) + n_cov,
            FeatureMode::Saturated => self.cells.len().max(1),
        }
    }

    fn row(&self, rec: &UnitRecord, hist: &[u8]) -> Option<Vec<f64>> {
        debug_assert_eq!(hist.len(), self.hist_len);
        let covs = self.covariates(rec)?;
        let mut row = Vec::with_capacity(self.width());
        match self.mode {
            FeatureMode::MainEffects => {
                row.push(1.0);
                row.extend(hist.iter().map(|&b| b as f64));
                row.extend(covs);
            }
            FeatureMode::HistorySaturated => {
                let cell = hist.iter().fold(0usize, |a, &b| (a << 1) | b as usize);
                row.resize(1 << self.hist_len, 0.0);
                row[cell] = 1.0;
                row.extend(covs);
            }
            FeatureMode::Saturated => {
                row.resize(self.width(), 0.0);
                if let Some(&j) = self.cells.get(&Self::cell_key(hist, &covs)) {
                    row[j] = 1.0;
                }
            }
        }
        Some(row)
    }

    /// Design for the training rows; saturated maps learn their cells here.
    fn design(&mut self, rows: &[(&UnitRecord, &[u8])]) -> Result<DesignMatrix> {
        if self.mode == FeatureMode::Saturated {
            self.cells.clear();
            for (rec, hist) in rows {
                let covs = self.covariates(rec).expect("training rows are observed");
                let next = self.cells.len();
                self.cells
                    .entry(Self::cell_key(hist, &covs))
                    .or_insert(next);
            }
        }
        let d = self.width();
        let mut data = Vec::with_capacity(rows.len() * d);
        for (rec, hist) in rows {
            data.extend(self.row(rec, hist).expect("training rows are observed"));
        }
        let names = (0..d).map(|j| format!("f{j}")).collect();
        DesignMatrix::new(rows.len(), d, data, names)
    }
}

/// Column positions kept by each model family.
#[derive(Debug, Clone)]
struct Layout {
    prop_baseline: Vec<usize>,
    prop_varying: Vec<usize>,
    out_baseline: Vec<usize>,
    out_varying: Vec<usize>,
}

impl Layout {
    fn new(data: &PanelDataset, config: &LearnerConfig) -> Result<Self> {
        let inv = data.schema().invariant();
        let var = data.schema().varying();
        for name in config
            .exclude_propensity
            .iter()
            .chain(&config.exclude_outcome)
        {
            if !inv.contains(&name.as_str()) && !var.contains(&name.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "excluded covariate '{name}' is not in the schema"
                )));
            }
        }
        let keep = |cols: &[&str], excluded: &[String]| -> Vec<usize> {
            (0..cols.len())
                .filter(|&j| !excluded.iter().any(|e| e == cols[j]))
                .collect()
        };
        Ok(Self {
            prop_baseline: keep(&inv, &config.exclude_propensity),
            prop_varying: keep(&var, &config.exclude_propensity),
            out_baseline: keep(&inv, &config.exclude_outcome),
            out_varying: keep(&var, &config.exclude_outcome),
        })
    }
}

#[derive(Debug, Clone)]
struct ModelFit {
    map: FeatureMap,
    fit: LearnerFit,
}

impl ModelFit {
    fn eval(&self, rec: &UnitRecord, hist: &[u8]) -> Result<f64> {
        self.map
            .row(rec, hist)
            .map(|r| self.fit.predict_row(&r))
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unit {} is not observed at time {}",
                    rec.id, self.map.cov_time
                ))
            })
    }
}

fn train(
    mut map: FeatureMap,
    rows: &[(&UnitRecord, &[u8])],
    y: &[f64],
    logistic: bool,
    diag: &mut FitDiagnostics,
) -> Result<ModelFit> {
    let x = map.design(rows)?;
    let fit = if logistic {
        fit_logistic(&x, y, None)?
    } else {
        fit_linear(&x, y, None)?
    };
    diag.record(&fit);
    Ok(ModelFit { map, fit })
}

fn empty_risk(time: usize, history: &[u8], context: &str) -> Error {
    Error::EmptyRiskSet {
        time,
        history: bits_string(history),
        context: context.to_string(),
    }
}

fn bits_string(bits: &[u8]) -> String {
    bits.iter().map(|b| char::from(b'0' + b)).collect()
}

/// A model slot that may have failed to fit; the failure is reported when
/// (and only if) the model is needed.
#[derive(Debug, Clone)]
enum Slot {
    Missing,
    Fitted(Box<ModelFit>),
    Failed { time: usize, context: String },
}

impl Slot {
    fn get(&self, time: usize, what: &str) -> Result<&ModelFit> {
        match self {
            Slot::Fitted(m) => Ok(m),
            Slot::Failed { time, context } => Err(empty_risk(*time, &[], context)),
            Slot::Missing => Err(Error::InvalidConfig(format!(
                "{what} model at time {time} was not requested when fitting"
            ))),
        }
    }
}

/// Per-level regressions realizing one recursive function; `levels[k - 1]`
/// holds the level-`k` regression for `k` below the top level.
#[derive(Debug, Clone)]
struct Recursion {
    levels: Vec<ModelFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    /// `m_{Y_t S_t}`, target history of length `t`.
    Ys,
    /// `m_{S_t}`, target history of length `t - 1`.
    S,
}

/// All fitted nuisance models for one training sample.
#[derive(Debug, Clone)]
pub struct NuisanceBundle {
    horizon: usize,
    shortcut: bool,
    recursion: RecursionMode,
    propensity: Vec<Slot>,
    eligibility: Vec<Slot>,
    outcome: Vec<Slot>,
    ys: HashMap<TreatmentHistory, std::result::Result<Recursion, (usize, String, String)>>,
    s: HashMap<TreatmentHistory, std::result::Result<Recursion, (usize, String, String)>>,
    diagnostics: FitDiagnostics,
}

impl NuisanceBundle {
    pub fn fit(data: &PanelDataset, config: &LearnerConfig, req: &Requirements) -> Result<Self> {
        let horizon = data.horizon();
        for h in &req.ys_targets {
            if h.is_empty() || h.len() > horizon {
                return Err(Error::InvalidConfig(format!(
                    "outcome target '{h}' outside 1..={horizon}"
                )));
            }
        }
        for h in &req.s_targets {
            if h.is_empty() || h.len() >= horizon {
                return Err(Error::InvalidConfig(format!(
                    "eligibility target '{h}' outside 1..{horizon}"
                )));
            }
        }
        if req.propensity_through > horizon {
            return Err(Error::InvalidConfig(format!(
                "propensities requested through {} beyond horizon {horizon}",
                req.propensity_through
            )));
        }
        let layout = Layout::new(data, config)?;
        let logistic_outcome = match config.outcome_family {
            OutcomeFamily::Auto => data.binary_outcomes() && !constant_outcomes(data),
            OutcomeFamily::Linear => false,
            OutcomeFamily::Logistic => {
                if !data.binary_outcomes() {
                    return Err(Error::InvalidConfig(
                        "logistic outcome models need 0/1 outcomes".into(),
                    ));
                }
                true
            }
        };
        let mut need_p = vec![false; horizon + 1];
        let mut need_mu = vec![false; horizon + 1];
        for h in &req.ys_targets {
            need_mu[h.len()] = true;
            need_p
                .iter_mut()
                .take(h.len() + 1)
                .skip(2)
                .for_each(|p| *p = true);
        }
        for h in &req.s_targets {
            need_p
                .iter_mut()
                .take(h.len() + 2)
                .skip(2)
                .for_each(|p| *p = true);
        }

        let mut diag = FitDiagnostics::default();
        let units = data.units();
        let mut bundle = NuisanceBundle {
            horizon,
            shortcut: config.invariant_shortcut && data.time_invariant_only(),
            recursion: config.recursion,
            propensity: vec![Slot::Missing; horizon + 1],
            eligibility: vec![Slot::Missing; horizon + 1],
            outcome: vec![Slot::Missing; horizon + 1],
            ys: HashMap::new(),
            s: HashMap::new(),
            diagnostics: FitDiagnostics::default(),
        };

        // Per-unit observed histories, shared by all training sets.
        let hist: Vec<Vec<u8>> = units
            .iter()
            .map(|u| u.periods.iter().map(|p| p.treatment).collect())
            .collect();

        for t in 1..=horizon {
            if t <= req.propensity_through {
                // w_t: Z_t on (Z̄_{t-1}, X̄_t) over S_t = 1.
                let idx: Vec<usize> = (0..units.len()).filter(|&i| units[i].eligible(t)).collect();
                let rows: Vec<(&UnitRecord, &[u8])> = idx
                    .iter()
                    .map(|&i| (&units[i], &hist[i][..t - 1]))
                    .collect();
                let y: Vec<f64> = idx.iter().map(|&i| hist[i][t - 1] as f64).collect();
                let map = FeatureMap::new(&layout, Family::Propensity, config.features, t - 1, t);
                bundle.propensity[t] = slot(rows.is_empty(), t, "propensity model", || {
                    train(map, &rows, &y, true, &mut diag)
                })?;
            }
            if need_p[t] && t >= 2 {
                // p_t: S_t on (Z̄_{t-1}, X̄_{t-1}) over S_{t-1} = 1.
                let idx: Vec<usize> = (0..units.len())
                    .filter(|&i| units[i].eligible(t - 1))
                    .collect();
                let rows: Vec<(&UnitRecord, &[u8])> = idx
                    .iter()
                    .map(|&i| (&units[i], &hist[i][..t - 1]))
                    .collect();
                let y: Vec<f64> = idx
                    .iter()
                    .map(|&i| units[i].eligible(t) as u8 as f64)
                    .collect();
                let map = FeatureMap::new(&layout, Family::Outcome, config.features, t - 1, t - 1);
                bundle.eligibility[t] = slot(rows.is_empty(), t, "eligibility model", || {
                    train(map, &rows, &y, true, &mut diag)
                })?;
            }
            if need_mu[t] {
                // mu_t: Y_t on (Z̄_t, X̄_t) over S_t = 1.
                let idx: Vec<usize> = (0..units.len()).filter(|&i| units[i].eligible(t)).collect();
                let rows: Vec<(&UnitRecord, &[u8])> =
                    idx.iter().map(|&i| (&units[i], &hist[i][..t])).collect();
                let y: Vec<f64> = idx
                    .iter()
                    .map(|&i| units[i].periods[t - 1].outcome)
                    .collect();
                let map = FeatureMap::new(&layout, Family::Outcome, config.features, t, t);
                bundle.outcome[t] = slot(rows.is_empty(), t, "outcome model", || {
                    train(map, &rows, &y, logistic_outcome, &mut diag)
                })?;
            }
        }

        if !bundle.shortcut {
            for target in &req.ys_targets {
                let rec = bundle.fit_recursion(
                    units,
                    &hist,
                    &layout,
                    config,
                    Target::Ys,
                    target.bits(),
                    &mut diag,
                );
                bundle.ys.insert(target.clone(), rec);
            }
            for target in &req.s_targets {
                let rec = bundle.fit_recursion(
                    units,
                    &hist,
                    &layout,
                    config,
                    Target::S,
                    target.bits(),
                    &mut diag,
                );
                bundle.s.insert(target.clone(), rec);
            }
        }
        bundle.diagnostics = diag;
        Ok(bundle)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// True when the closed-form time-invariant products are in use.
    pub fn uses_shortcut(&self) -> bool {
        self.shortcut
    }

    #[allow(clippy::too_many_arguments)]
    fn fit_recursion(
        &self,
        units: &[UnitRecord],
        hist: &[Vec<u8>],
        layout: &Layout,
        config: &LearnerConfig,
        kind: Target,
        target: &[u8],
        diag: &mut FitDiagnostics,
    ) -> std::result::Result<Recursion, (usize, String, String)> {
        let top = target.len();
        let mut partial = Recursion { levels: Vec::new() };
        // Levels are fitted top-down; `partial.levels` is filled back to front.
        let mut fitted: Vec<Option<ModelFit>> = vec![None; top];
        for k in (1..top).rev() {
            let product = self.recursion == RecursionMode::Product;
            let idx: Vec<usize> = (0..units.len())
                .filter(|&i| {
                    if product {
                        units[i].eligible(k + 1)
                    } else {
                        units[i].eligible(k)
                    }
                })
                .collect();
            if idx.is_empty() {
                let ctx = format!(
                    "no units eligible at time {} to fit the level-{k} regression",
                    if product { k + 1 } else { k }
                );
                return Err((k, bits_string(&target[..k]), ctx));
            }
            partial.levels = fitted.iter().flatten().cloned().collect();
            let mut y = Vec::with_capacity(idx.len());
            for &i in &idx {
                let u = &units[i];
                let v = if u.eligible(k + 1) {
                    self.level_value(&partial, k + 1, kind, u, target, top)
                        .map_err(|e| (k, bits_string(&target[..k]), e.to_string()))?
                } else {
                    0.0
                };
                y.push(v);
            }
            let rows: Vec<(&UnitRecord, &[u8])> =
                idx.iter().map(|&i| (&units[i], &hist[i][..k])).collect();
            let map = FeatureMap::new(layout, Family::Outcome, config.features, k, k);
            let model = train(map, &rows, &y, false, diag)
                .map_err(|e| (k, bits_string(&target[..k]), e.to_string()))?;
            fitted[k - 1] = Some(model);
        }
        Ok(Recursion {
            levels: fitted.into_iter().flatten().collect(),
        })
    }

    /// Value of the recursive function at level `k` (levels above `k` fitted).
    /// `rec.levels` holds the fitted levels `k..top-1` in increasing order.
    fn level_value(
        &self,
        rec: &Recursion,
        k: usize,
        kind: Target,
        unit: &UnitRecord,
        target: &[u8],
        top: usize,
    ) -> Result<f64> {
        if k == top {
            return self.base(kind, unit, target);
        }
        let first = top - rec.levels.len();
        let model = &rec.levels[k - first];
        let e = model.eval(unit, &target[..k])?;
        match self.recursion {
            RecursionMode::Product => {
                let p = self.eligibility[k + 1].get(k + 1, "eligibility")?;
                Ok(e * p.eval(unit, &target[..k])?)
            }
            RecursionMode::Direct => Ok(e),
        }
    }

    fn base(&self, kind: Target, unit: &UnitRecord, target: &[u8]) -> Result<f64> {
        match kind {
            Target::Ys => self.outcome[target.len()]
                .get(target.len(), "outcome")?
                .eval(unit, target),
            Target::S => {
                let t = target.len() + 1;
                self.eligibility[t]
                    .get(t, "eligibility")?
                    .eval(unit, target)
            }
        }
    }

    fn shortcut_value(
        &self,
        kind: Target,
        unit: &UnitRecord,
        target: &[u8],
        k: usize,
    ) -> Result<f64> {
        let t = match kind {
            Target::Ys => target.len(),
            Target::S => target.len() + 1,
        };
        let mut v = match kind {
            Target::Ys => self.base(kind, unit, target)?,
            Target::S => 1.0,
        };
        for s in k + 1..=t {
            v *= self.eligibility[s]
                .get(s, "eligibility")?
                .eval(unit, &target[..s - 1])?;
        }
        Ok(v)
    }

    fn recursive(&self, kind: Target, unit: &UnitRecord, target: &[u8], k: usize) -> Result<f64> {
        let top = target.len();
        if k == 0 || k > top {
            return Err(Error::InvalidConfig(format!(
                "level {k} outside 1..={top} for target '{}'",
                bits_string(target)
            )));
        }
        if self.shortcut {
            return self.shortcut_value(kind, unit, target, k);
        }
        let table = match kind {
            Target::Ys => &self.ys,
            Target::S => &self.s,
        };
        let key = TreatmentHistory::new(target.to_vec())?;
        match table.get(&key) {
            Some(Ok(rec)) => self.level_value(rec, k, kind, unit, target, top),
            Some(Err((time, history, context))) => Err(Error::EmptyRiskSet {
                time: *time,
                history: history.clone(),
                context: context.clone(),
            }),
            None => Err(Error::InvalidConfig(format!(
                "recursive function for target '{key}' was not fitted"
            ))),
        }
    }
}

fn constant_outcomes(data: &PanelDataset) -> bool {
    let mut ys = data
        .units()
        .iter()
        .flat_map(|u| u.periods.iter().map(|p| p.outcome));
    let first = ys.next();
    ys.all(|y| Some(y) == first)
}

fn slot(
    empty: bool,
    time: usize,
    context: &str,
    fit: impl FnOnce() -> Result<ModelFit>,
) -> Result<Slot> {
    if empty {
        return Ok(Slot::Failed {
            time,
            context: format!("no training rows for the {context}"),
        });
    }
    match fit() {
        Ok(m) => Ok(Slot::Fitted(Box::new(m))),
        Err(Error::DegenerateFit(msg)) => Ok(Slot::Failed {
            time,
            context: format!("{context}: {msg}"),
        }),
        Err(e) => Err(e),
    }
}

impl NuisanceSource for NuisanceBundle {
    fn propensity(&self, _unit: usize, rec: &UnitRecord, z: &[u8]) -> Result<f64> {
        let s = z.len();
        if s == 0 || s > self.horizon {
            return Err(Error::InvalidConfig(format!("propensity at time {s}")));
        }
        let p1 = self.propensity[s]
            .get(s, "propensity")?
            .eval(rec, &z[..s - 1])?;
        Ok(if z[s - 1] == 1 { p1 } else { 1.0 - p1 })
    }

    fn m_ys(&self, _unit: usize, rec: &UnitRecord, target: &[u8], k: usize) -> Result<f64> {
        self.recursive(Target::Ys, rec, target, k)
    }

    fn m_s(&self, _unit: usize, rec: &UnitRecord, target: &[u8], k: usize) -> Result<f64> {
        self.recursive(Target::S, rec, target, k)
    }

    fn diagnostics(&self) -> FitDiagnostics {
        self.diagnostics
    }
}

/// Bundles fitted off-fold; each unit is evaluated with the bundle that
/// never saw it.
#[derive(Debug, Clone)]
pub struct CrossFitted {
    fold_of: Vec<usize>,
    bundles: Vec<NuisanceBundle>,
}

impl CrossFitted {
    pub fn fit(
        data: &PanelDataset,
        config: &LearnerConfig,
        req: &Requirements,
        folds: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = data.len();
        if folds < 2 || folds > n {
            return Err(Error::InvalidConfig(format!(
                "cross-fitting needs 2 <= K <= n, got K = {folds} with n = {n}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut fold_of = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            fold_of[i] = pos % folds;
        }
        let bundles = (0..folds)
            .map(|f| {
                let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
                NuisanceBundle::fit(&data.subset(&train), config, req)
            })
            .collect::<Result<_>>()?;
        Ok(Self { fold_of, bundles })
    }

    pub fn fold_of(&self, unit: usize) -> usize {
        self.fold_of[unit]
    }

    fn bundle(&self, unit: usize) -> Result<&NuisanceBundle> {
        self.fold_of
            .get(unit)
            .map(|&f| &self.bundles[f])
            .ok_or_else(|| {
                Error::InvalidConfig(format!("unit index {unit} outside the fitted sample"))
            })
    }
}

impl NuisanceSource for CrossFitted {
    fn propensity(&self, unit: usize, rec: &UnitRecord, z: &[u8]) -> Result<f64> {
        self.bundle(unit)?.propensity(unit, rec, z)
    }

    fn m_ys(&self, unit: usize, rec: &UnitRecord, target: &[u8], k: usize) -> Result<f64> {
        self.bundle(unit)?.m_ys(unit, rec, target, k)
    }

    fn m_s(&self, unit: usize, rec: &UnitRecord, target: &[u8], k: usize) -> Result<f64> {
        self.bundle(unit)?.m_s(unit, rec, target, k)
    }

    fn diagnostics(&self) -> FitDiagnostics {
        let mut d = FitDiagnostics::default();
        for b in &self.bundles {
            d.merge(&b.diagnostics);
        }
        d
    }
}

/// Single or cross-fitted nuisances, as chosen by the learner config.
#[derive(Debug, Clone)]
pub enum FittedNuisance {
    Single(NuisanceBundle),
    Cross(CrossFitted),
}

impl FittedNuisance {
    pub fn fit(data: &PanelDataset, config: &LearnerConfig, req: &Requirements) -> Result<Self> {
        match config.crossfit_folds {
            None => NuisanceBundle::fit(data, config, req).map(Self::Single),
            Some(k) => {
                CrossFitted::fit(data, config, req, k, config.crossfit_seed).map(Self::Cross)
            }
        }
    }

    fn inner(&self) -> &dyn NuisanceSource {
        match self {
            Self::Single(b) => b,
            Self::Cross(c) => c,
        }
    }
}

impl NuisanceSource for FittedNuisance {
    fn propensity(&self, unit: usize, rec: &UnitRecord, z: &[u8]) -> Result<f64> {
        self.inner().propensity(unit, rec, z)
    }

    fn m_ys(&self, unit: usize, rec: &UnitRecord, target: &[u8], k: usize) -> Result<f64> {
        self.inner().m_ys(unit, rec, target, k)
    }

    fn m_s(&self, unit: usize, rec: &UnitRecord, target: &[u8], k: usize) -> Result<f64> {
        self.inner().m_s(unit, rec, target, k)
    }

    fn diagnostics(&self) -> FitDiagnostics {
        self.inner().diagnostics()
    }
}

/// True when `p` sits on a clipping bound of the learners.
pub fn at_clip_bound(p: f64) -> bool {
    p <= CLIP || p >= 1.0 - CLIP
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::learners::sigmoid;
    use crate::panel::{CovariateSchema, Period};
    use proptest::prelude::*;
    use rand::Rng;

    /// Random discrete panel: binary `x` (invariant) and optionally a binary
    /// time-varying `v`, logistic treatment and eligibility.
    pub(crate) fn discrete_panel(
        seed: u64,
        n: usize,
        horizon: usize,
        varying: bool,
    ) -> PanelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = if varying {
            CovariateSchema::new(&["x"], &["v"])
        } else {
            CovariateSchema::new(&["x"], &[])
        };
        let units = (0..n)
            .map(|i| {
                let x = rng.random_range(0..2) as f64;
                let mut periods = Vec::new();
                let mut prev_z = 0.0;
                for t in 1..=horizon {
                    if t > 1 && rng.random::<f64>() > sigmoid(1.0 + 0.5 * x - 0.7 * prev_z) {
                        break;
                    }
                    let v = rng.random_range(0..2) as f64;
                    let z = (rng.random::<f64>()
                        < sigmoid(-0.3 + 0.6 * x + 0.4 * v * varying as u8 as f64))
                        as u8;
                    let y = x + z as f64 * (1.0 + x) + prev_z + rng.random_range(0..3) as f64;
                    periods.push(Period {
                        treatment: z,
                        outcome: y,
                        covariates: if varying { vec![v] } else { vec![] },
                    });
                    prev_z = z as f64;
                }
                UnitRecord {
                    id: format!("u{i}"),
                    baseline: vec![x],
                    periods,
                }
            })
            .collect();
        PanelDataset::new(schema, units).unwrap()
    }

    fn all_targets(horizon: usize) -> Requirements {
        let mut req = Requirements {
            propensity_through: horizon,
            ..Default::default()
        };
        for t in 1..=horizon {
            req.ys_targets.extend(TreatmentHistory::all(t));
            if t < horizon {
                req.s_targets.extend(TreatmentHistory::all(t));
            }
        }
        req
    }

    #[test]
    fn randomized_treatment_propensity_is_near_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let units = (0..2000)
            .map(|i| UnitRecord {
                id: format!("u{i}"),
                baseline: vec![rng.random::<f64>()],
                periods: (0..2)
                    .map(|_| Period {
                        treatment: rng.random_range(0..2),
                        outcome: 0.0,
                        covariates: vec![],
                    })
                    .collect(),
            })
            .collect();
        let data = PanelDataset::new(CovariateSchema::new(&["x"], &[]), units).unwrap();
        let req = Requirements {
            propensity_through: 2,
            ..Default::default()
        };
        let b = NuisanceBundle::fit(&data, &LearnerConfig::default(), &req).unwrap();
        for (i, u) in data.units().iter().enumerate() {
            let h = u.history(2).unwrap();
            for s in 1..=2 {
                let mut z = h.bits()[..s].to_vec();
                z[s - 1] = 1;
                let w = b.propensity(i, u, &z).unwrap();
                assert!((w - 0.5).abs() < 0.05, "w_{s} = {w}");
            }
        }
    }

    #[test]
    fn deterministic_treatment_is_flagged_as_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let units = (0..200)
            .map(|i| {
                let x: f64 = rng.random_range(-1.0..1.0);
                UnitRecord {
                    id: format!("u{i}"),
                    baseline: vec![x],
                    periods: vec![Period {
                        treatment: (x > 0.0) as u8,
                        outcome: x,
                        covariates: vec![],
                    }],
                }
            })
            .collect();
        let data = PanelDataset::new(CovariateSchema::new(&["x"], &[]), units).unwrap();
        let req = Requirements {
            propensity_through: 1,
            ..Default::default()
        };
        let b = NuisanceBundle::fit(&data, &LearnerConfig::default(), &req).unwrap();
        assert_eq!(b.diagnostics().separated, 1);
    }

    struct Half;
    impl NuisanceSource for Half {
        fn propensity(&self, _: usize, _: &UnitRecord, _: &[u8]) -> Result<f64> {
            Ok(0.5)
        }
        fn m_ys(&self, _: usize, _: &UnitRecord, _: &[u8], _: usize) -> Result<f64> {
            Ok(0.0)
        }
        fn m_s(&self, _: usize, _: &UnitRecord, _: &[u8], _: usize) -> Result<f64> {
            Ok(1.0)
        }
    }

    #[test]
    fn propensity_product_basics() {
        let data = discrete_panel(1, 5, 3, false);
        let u = &data.units()[0];
        assert_eq!(propensity_product(&Half, 0, u, &[1, 0, 1]).unwrap(), 0.125);
        assert_eq!(propensity_product(&Half, 0, u, &[]).unwrap(), 1.0);
    }

    #[test]
    fn first_period_recursion_is_the_outcome_model() {
        let data = discrete_panel(2, 400, 2, true);
        let config = LearnerConfig::default();
        let b = NuisanceBundle::fit(&data, &config, &all_targets(2)).unwrap();
        let mu = b.outcome[1].get(1, "outcome").unwrap();
        for u in data.units() {
            for z in [0u8, 1] {
                assert_eq!(b.m_ys(0, u, &[z], 1).unwrap(), mu.eval(u, &[z]).unwrap());
            }
        }
    }

    #[test]
    fn shortcut_matches_recursion_with_saturated_learners() {
        let data = discrete_panel(3, 3000, 3, false);
        let mut config = LearnerConfig {
            features: FeatureMode::Saturated,
            ..Default::default()
        };
        let req = all_targets(3);
        let fast = NuisanceBundle::fit(&data, &config, &req).unwrap();
        assert!(fast.uses_shortcut());
        config.invariant_shortcut = false;
        let slow = NuisanceBundle::fit(&data, &config, &req).unwrap();
        assert!(!slow.uses_shortcut());
        for u in data.units().iter().take(50) {
            for target in &req.ys_targets {
                for k in 1..=target.len() {
                    let a = fast.m_ys(0, u, target.bits(), k).unwrap();
                    let b = slow.m_ys(0, u, target.bits(), k).unwrap();
                    assert!((a - b).abs() < 1e-8, "{target} k={k}: {a} vs {b}");
                }
            }
            for target in &req.s_targets {
                for k in 1..=target.len() {
                    let a = fast.m_s(0, u, target.bits(), k).unwrap();
                    let b = slow.m_s(0, u, target.bits(), k).unwrap();
                    assert!((a - b).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn direct_and_product_agree_with_saturated_learners() {
        let data = discrete_panel(4, 3000, 3, true);
        let mut config = LearnerConfig {
            features: FeatureMode::Saturated,
            ..Default::default()
        };
        let req = all_targets(3);
        let product = NuisanceBundle::fit(&data, &config, &req).unwrap();
        config.recursion = RecursionMode::Direct;
        let direct = NuisanceBundle::fit(&data, &config, &req).unwrap();
        for u in data.units().iter().take(80) {
            for target in &req.ys_targets {
                for k in 1..=target.len().min(u.eligible_through()) {
                    let a = product.m_ys(0, u, target.bits(), k).unwrap();
                    let b = direct.m_ys(0, u, target.bits(), k).unwrap();
                    assert!((a - b).abs() < 1e-10, "{target} k={k}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn cross_fitting_uses_off_fold_models() {
        let data = discrete_panel(6, 300, 2, false);
        let config = LearnerConfig {
            crossfit_folds: Some(3),
            crossfit_seed: 4,
            ..Default::default()
        };
        let fitted = FittedNuisance::fit(&data, &config, &all_targets(2)).unwrap();
        let FittedNuisance::Cross(cf) = &fitted else {
            panic!("expected cross-fitting")
        };
        let sizes: Vec<usize> = (0..3)
            .map(|f| (0..300).filter(|&i| cf.fold_of(i) == f).count())
            .collect();
        assert_eq!(sizes, vec![100, 100, 100]);
        let u = &data.units()[0];
        assert!(fitted.propensity(0, u, &[1]).unwrap() > 0.0);
    }

    #[test]
    fn unknown_exclusion_is_rejected() {
        let data = discrete_panel(7, 20, 1, false);
        let config = LearnerConfig {
            exclude_outcome: vec!["nope".into()],
            ..Default::default()
        };
        let err = NuisanceBundle::fit(&data, &config, &all_targets(1)).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn evaluations_stay_in_range(seed in 0u64..1000, varying in any::<bool>()) {
            let data = discrete_panel(seed, 300, 3, varying);
            let config = LearnerConfig { features: FeatureMode::Saturated, ..Default::default() };
            let req = all_targets(3);
            let b = NuisanceBundle::fit(&data, &config, &req).unwrap();
            for (i, u) in data.units().iter().enumerate() {
                let h = u.history(u.eligible_through()).unwrap();
                let mut prev = 1.0;
                for s in 1..=h.len() {
                    let w = b.propensity(i, u, &h.bits()[..s]).unwrap();
                    prop_assert!(w > 0.0 && w < 1.0);
                    let pi = propensity_product(&b, i, u, &h.bits()[..s]).unwrap();
                    prop_assert!(pi > 0.0 && pi <= 1.0);
                    prop_assert_eq!(pi, prev * w);
                    prop_assert!((pi / prev - w).abs() <= 1e-15 * w);
                    prev = pi;
                }
                for target in &req.s_targets {
                    for k in 1..=target.len().min(u.eligible_through()) {
                        let m = b.m_s(i, u, target.bits(), k).unwrap();
                        prop_assert!((0.0..=1.0).contains(&m), "m_S = {}", m);
                    }
                }
            }
        }
    }
}
