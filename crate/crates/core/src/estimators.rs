//! Outcome-regression (REG), inverse-probability-weighting (IPW) and doubly
//! robust (DR) estimators of eligible treatment effects and expected
//! cumulative outcomes under treatment policies.
//!
//! For a history `z̄_t` the building blocks are
//! `N(z̄_t) = E{Y_t(z̄_t) S_t(z̄_{t-1})}` and `D(z̄_{t-1}) = P{S_t(z̄_{t-1}) = 1}`;
//! `tau_t(z̄_{t-1}) = (N(z̄_{t-1}, 1) - N(z̄_{t-1}, 0)) / D(z̄_{t-1})` and
//! `theta(xi) = sum_t sum_{z̄_t} N(z̄_t) xi_t(z̄_t)`.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nuisance::{
    at_clip_bound, FitDiagnostics, FittedNuisance, LearnerConfig, NuisanceSource, Requirements,
};
use crate::panel::{PanelDataset, TreatmentHistory, UnitRecord};

/// Lower bound applied to estimated propensity products.
pub const PI_FLOOR: f64 = 1e-6;
/// Smallest eligibility estimate accepted as a denominator.
pub const DENOMINATOR_GUARD: f64 = 1e-8;

/// A (possibly stochastic) treatment policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Treat (`1`) or withhold (`0`) at every eligible time.
    Always(u8),
    /// Follow a fixed sequence.
    Sequence(TreatmentHistory),
    /// `P(Z_t = 1 | z̄_{t-1})` looked up by the longest listed prefix of the
    /// history; the empty history must be listed.
    Table(BTreeMap<TreatmentHistory, f64>),
    /// `sum_j a_j xi_j` over sequence probabilities.
    Mixture(Vec<(f64, Policy)>),
}

impl Policy {
    /// `xi(z | z̄_{t-1})`.
    pub fn step(&self, z: u8, hist: &[u8]) -> f64 {
        let p1 = match self {
            Policy::Always(a) => *a as f64,
            Policy::Sequence(seq) => match seq.bits().get(hist.len()) {
                Some(&b) => b as f64,
                None => 0.5,
            },
            Policy::Table(table) => (0..=hist.len())
                .rev()
                .find_map(|k| {
                    table.get(&TreatmentHistory::new(hist[..k].to_vec()).expect("binary history"))
                })
                .copied()
                .unwrap_or(0.5),
            Policy::Mixture(parts) => {
                let prev = self.seq_prob(hist);
                if prev > 0.0 {
                    let mut next = hist.to_vec();
                    next.push(1);
                    self.seq_prob(&next) / prev
                } else {
                    parts.iter().map(|(a, p)| a * p.step(1, hist)).sum()
                }
            }
        };
        if z == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    /// `xi_t(z̄_t)`, the probability of the whole sequence.
    pub fn seq_prob(&self, zbar: &[u8]) -> f64 {
        match self {
            Policy::Mixture(parts) => parts.iter().map(|(a, p)| a * p.seq_prob(zbar)).sum(),
            _ => (0..zbar.len())
                .map(|k| self.step(zbar[k], &zbar[..k]))
                .product(),
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        match self {
            Policy::Always(a) if *a > 1 => Err(Error::Parse(format!("all:{a} is not binary"))),
            Policy::Always(_) => Ok(()),
            Policy::Sequence(seq) if seq.len() < horizon => Err(Error::InvalidConfig(format!(
                "sequence policy '{seq}' is shorter than the horizon {horizon}"
            ))),
            Policy::Sequence(_) => Ok(()),
            Policy::Table(table) => {
                if !table.contains_key(&TreatmentHistory::empty()) {
                    return Err(Error::Parse(
                        "policy table must list the empty history".into(),
                    ));
                }
                if let Some((h, p)) = table.iter().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
                    return Err(Error::Parse(format!(
                        "policy table entry '{h}' = {p} is not a probability"
                    )));
                }
                Ok(())
            }
            Policy::Mixture(parts) => {
                let total: f64 = parts.iter().map(|(a, _)| a).sum();
                if parts.iter().any(|(a, _)| *a < 0.0) || (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidConfig(
                        "mixture weights must be nonnegative and sum to 1".into(),
                    ));
                }
                parts.iter().try_for_each(|(_, p)| p.validate(horizon))
            }
        }
    }

    /// Parses `all:1`, `all:0`, a bit sequence such as `101`, or a table
    /// (`history = probability` entries separated by newlines or `;`).
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        match text {
            "all:1" => return Ok(Policy::Always(1)),
            "all:0" => return Ok(Policy::Always(0)),
            _ => {}
        }
        if let Some(rest) = text.strip_prefix("table:") {
            return Self::parse_table(rest);
        }
        if text.contains('=') {
            return Self::parse_table(text);
        }
        if !text.is_empty() && text.chars().all(|c| c == '0' || c == '1') {
            return Ok(Policy::Sequence(text.parse()?));
        }
        Err(Error::Parse(format!("unrecognized policy '{text}'")))
    }

    pub fn parse_table(text: &str) -> Result<Self> {
        let mut table = BTreeMap::new();
        for entry in text.split(['\n', ';']) {
            let entry = entry.split('#').next().unwrap_or("").trim();
            if entry.is_empty() {
                continue;
            }
            let (h, p) = entry
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("policy entry '{entry}' lacks '='")))?;
            let h: TreatmentHistory = h.trim().trim_matches('"').parse()?;
            let p: f64 = p.trim().parse().map_err(|_| {
                Error::Parse(format!("policy probability '{}' is not a number", p.trim()))
            })?;
            if table.insert(h.clone(), p).is_some() {
                return Err(Error::Parse(format!("policy history '{h}' listed twice")));
            }
        }
        let policy = Policy::Table(table);
        policy.validate(0)?;
        Ok(policy)
    }

    pub fn label(&self) -> String {
        match self {
            Policy::Always(a) => format!("all:{a}"),
            Policy::Sequence(s) => s.to_string(),
            Policy::Table(t) => format!(
                "table:{}",
                t.iter()
                    .map(|(h, p)| format!("{h}={p}"))
                    .collect::<Vec<_>>()
                    .join(";")
            ),
            Policy::Mixture(parts) => format!(
                "mix({})",
                parts
                    .iter()
                    .map(|(a, p)| format!("{a}*{}", p.label()))
                    .collect::<Vec<_>>()
                    .join("+")
            ),
        }
    }

    /// Histories of length `1..=horizon` with positive policy mass.
    pub fn support(&self, horizon: usize) -> Vec<TreatmentHistory> {
        (1..=horizon)
            .flat_map(TreatmentHistory::all)
            .filter(|h| self.seq_prob(h.bits()) > 0.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimand {
    /// `tau_t(z̄_{t-1})`.
    Ete { t: usize, history: TreatmentHistory },
    /// `theta(xi)`; `label` is the policy text as given.
    Eoe { label: String, policy: Policy },
}

impl Estimand {
    pub fn ete(t: usize, history: &str) -> Result<Self> {
        let history: TreatmentHistory = history.parse()?;
        if t == 0 || history.len() + 1 != t {
            return Err(Error::Parse(format!(
                "tau@{t}:{history} needs a history of length {}",
                t.saturating_sub(1)
            )));
        }
        Ok(Estimand::Ete { t, history })
    }

    pub fn eoe(policy: Policy) -> Self {
        Estimand::Eoe {
            label: policy.label(),
            policy,
        }
    }

    /// Parses `tau@t:hist`, `tau@t:*` (every history of length `t - 1`) or
    /// `theta:policy`. A policy of the form `@path` is read from a file.
    pub fn parse_many(spec: &str) -> Result<Vec<Self>> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("tau@") {
            let (t, h) = rest
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("estimand '{spec}' lacks ':'")))?;
            let t: usize = t
                .parse()
                .map_err(|_| Error::Parse(format!("estimand '{spec}' has a bad time")))?;
            if t == 0 {
                return Err(Error::Parse(format!("estimand '{spec}': time is 1-based")));
            }
            if h == "*" {
                return Ok(TreatmentHistory::all(t - 1)
                    .map(|history| Estimand::Ete { t, history })
                    .collect());
            }
            return Ok(vec![Self::ete(t, h)?]);
        }
        if let Some(rest) = spec.strip_prefix("theta:") {
            let policy = match rest.strip_prefix('@') {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    Policy::parse_table(&text)?
                }
                None => Policy::parse(rest)?,
            };
            return Ok(vec![Estimand::Eoe {
                label: rest.to_string(),
                policy,
            }]);
        }
        Err(Error::Parse(format!("unknown estimand '{spec}'")))
    }

    pub fn parse(spec: &str) -> Result<Self> {
        let mut all = Self::parse_many(spec)?;
        if all.len() != 1 {
            return Err(Error::Parse(format!(
                "'{spec}' expands to {} estimands",
                all.len()
            )));
        }
        Ok(all.remove(0))
    }

    pub fn label(&self) -> String {
        match self {
            Estimand::Ete { t, history } => format!("tau@{t}:{history}"),
            Estimand::Eoe { label, .. } => format!("theta:{label}"),
        }
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Reg,
    Ipw,
    Dr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Reg, Method::Ipw, Method::Dr];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Reg => "reg",
            Method::Ipw => "ipw",
            Method::Dr => "dr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reg" => Ok(Method::Reg),
            "ipw" => Ok(Method::Ipw),
            "dr" => Ok(Method::Dr),
            other => Err(Error::Parse(format!("unknown method '{other}'"))),
        }
    }
}

/// Per-unit EIF summands: `phi_N` for each outcome history and `phi_D` for
/// the eligibility history (absent for `t = 1`, where `D = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct EifValues {
    pub phi_n: Vec<(TreatmentHistory, Vec<f64>)>,
    pub phi_d: Option<(TreatmentHistory, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    Percentile,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub kind: IntervalKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Units following each history touched (eligible at its last period).
    pub risk_sets: Vec<(String, usize)>,
    /// Propensity or eligibility evaluations on a clipping bound, plus
    /// floored propensity products.
    pub clip_count: usize,
    pub failed_reps: usize,
    pub fits: FitDiagnostics,
}

impl Diagnostics {
    pub fn risk_set_min(&self) -> usize {
        self.risk_sets.iter().map(|r| r.1).min().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimand: Estimand,
    pub method: Method,
    pub estimate: f64,
    /// `N` estimates per outcome history.
    pub numerators: Vec<(TreatmentHistory, f64)>,
    /// `D` estimate (ETE only).
    pub denominator: Option<f64>,
    /// Per-unit influence values of the estimate (DR only).
    pub eif: Option<Vec<f64>>,
    pub components: Option<EifValues>,
    /// `sqrt(sum phi^2) / n` from the influence values (DR only).
    pub std_error: Option<f64>,
    pub diagnostics: Diagnostics,
    pub interval: Option<Interval>,
}

/// Evaluation context: the data, a nuisance source and a clip counter.
struct Eval<'a, N: ?Sized> {
    data: &'a PanelDataset,
    source: &'a N,
    clips: Cell<usize>,
}

impl<'a, N: NuisanceSource + ?Sized> Eval<'a, N> {
    fn new(data: &'a PanelDataset, source: &'a N) -> Self {
        Self {
            data,
            source,
            clips: Cell::new(0),
        }
    }

    fn units(&self) -> impl Iterator<Item = (usize, &'a UnitRecord)> {
        self.data.units().iter().enumerate()
    }

    fn n(&self) -> f64 {
        self.data.len() as f64
    }

    /// Floored `pi_k` along `z`, counting clip events.
    fn pi(&self, i: usize, u: &UnitRecord, z: &[u8]) -> Result<f64> {
        let mut pi = 1.0;
        for s in 1..=z.len() {
            let w = self.source.propensity(i, u, &z[..s])?;
            if at_clip_bound(w) {
                self.clips.set(self.clips.get() + 1);
            }
            pi *= w;
        }
        if pi < PI_FLOOR {
            self.clips.set(self.clips.get() + 1);
            pi = PI_FLOOR;
        }
        Ok(pi)
    }

    fn m_s(&self, i: usize, u: &UnitRecord, target: &[u8], k: usize) -> Result<f64> {
        let v = self.source.m_s(i, u, target, k)?;
        if k + 1 == target.len() + 1 && at_clip_bound(v) {
            self.clips.set(self.clips.get() + 1);
        }
        Ok(v)
    }

    fn reg_n(&self, target: &[u8]) -> Result<f64> {
        let mut sum = 0.0;
        for (i, u) in self.units() {
            sum += self.source.m_ys(i, u, target, 1)?;
        }
        Ok(sum / self.n())
    }

    fn reg_d(&self, prev: &[u8]) -> Result<f64> {
        if prev.is_empty() {
            return Ok(1.0);
        }
        let mut sum = 0.0;
        for (i, u) in self.units() {
            sum += self.m_s(i, u, prev, 1)?;
        }
        Ok(sum / self.n())
    }

    fn ipw_n(&self, target: &[u8]) -> Result<f64> {
        let t = target.len();
        let mut sum = 0.0;
        for (i, u) in self.units() {
            if u.eligible(t) && follows(u, target) {
                sum += u.periods[t - 1].outcome / self.pi(i, u, target)?;
            }
        }
        Ok(sum / self.n())
    }

    fn ipw_d(&self, prev: &[u8]) -> Result<f64> {
        if prev.is_empty() {
            return Ok(1.0);
        }
        let t = prev.len() + 1;
        let mut sum = 0.0;
        for (i, u) in self.units() {
            if u.eligible(t) && follows(u, prev) {
                sum += 1.0 / self.pi(i, u, prev)?;
            }
        }
        Ok(sum / self.n())
    }

    /// `phi_N(z̄_t)` summand per unit.
    fn phi_n(&self, target: &[u8]) -> Result<Vec<f64>> {
        let t = target.len();
        self.units()
            .map(|(i, u)| {
                let mut phi = self.source.m_ys(i, u, target, 1)?;
                let mut m_k = phi;
                for k in 1..=t {
                    if !follows(u, &target[..k]) {
                        break;
                    }
                    let next = if k == t {
                        u.periods[t - 1].outcome
                    } else if u.eligible(k + 1) {
                        self.source.m_ys(i, u, target, k + 1)?
                    } else {
                        0.0
                    };
                    phi += (next - m_k) / self.pi(i, u, &target[..k])?;
                    m_k = next;
                }
                Ok(phi)
            })
            .collect()
    }

    /// `phi_D(z̄_{t-1})` summand per unit; identically 1 when `t = 1`.
    fn phi_d(&self, prev: &[u8]) -> Result<Vec<f64>> {
        let top = prev.len();
        if top == 0 {
            return Ok(vec![1.0; self.data.len()]);
        }
        self.units()
            .map(|(i, u)| {
                let mut phi = self.m_s(i, u, prev, 1)?;
                let mut m_k = phi;
                for k in 1..=top {
                    if !follows(u, &prev[..k]) {
                        break;
                    }
                    let next = if k == top {
                        u.eligible(top + 1) as u8 as f64
                    } else if u.eligible(k + 1) {
                        self.m_s(i, u, prev, k + 1)?
                    } else {
                        0.0
                    };
                    phi += (next - m_k) / self.pi(i, u, &prev[..k])?;
                    m_k = next;
                }
                Ok(phi)
            })
            .collect()
    }

    fn risk(&self, h: &[u8]) -> (String, usize) {
        let count = self.data.units().iter().filter(|u| follows(u, h)).count();
        (bits(h), count)
    }

    fn diagnostics(&self, risk_sets: Vec<(String, usize)>) -> Diagnostics {
        Diagnostics {
            risk_sets,
            clip_count: self.clips.get(),
            failed_reps: 0,
            fits: self.source.diagnostics(),
        }
    }
}

/// Unit observed through `h.len()` with `Z̄ = h`.
fn follows(u: &UnitRecord, h: &[u8]) -> bool {
    h.len() <= u.periods.len() && u.periods.iter().zip(h).all(|(p, &z)| p.treatment == z)
}

fn bits(h: &[u8]) -> String {
    h.iter().map(|b| char::from(b'0' + b)).collect()
}

/// No unit follows `h`: the data carry no information on that arm.
fn require_followers(
    h: &TreatmentHistory,
    risk: &(String, usize),
    context: impl FnOnce() -> String,
) -> Result<()> {
    if risk.1 > 0 {
        return Ok(());
    }
    Err(Error::EmptyRiskSet {
        time: h.len(),
        history: h.to_string(),
        context: context(),
    })
}

fn guard(d: f64, context: impl FnOnce() -> String) -> Result<f64> {
    if d.is_finite() && d >= DENOMINATOR_GUARD {
        Ok(d)
    } else {
        Err(Error::DegenerateDenominator {
            value: d,
            context: context(),
        })
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn eif_se(phi: &[f64]) -> f64 {
    phi.iter().map(|v| v * v).sum::<f64>().sqrt() / phi.len() as f64
}

fn check_target(data: &PanelDataset, target: &TreatmentHistory) -> Result<()> {
    if target.is_empty() || target.len() > data.horizon() {
        return Err(Error::InvalidConfig(format!(
            "history '{target}' outside 1..={}",
            data.horizon()
        )));
    }
    Ok(())
}

/// REG estimates of `E{Y_t(z̄_t) | S_t(z̄_{t-1}) = 1}` and `P{S_t(z̄_{t-1}) = 1}`.
pub fn estimate_reg<N: NuisanceSource + ?Sized>(
    data: &PanelDataset,
    source: &N,
    target: &TreatmentHistory,
) -> Result<(f64, f64)> {
    check_target(data, target)?;
    let ev = Eval::new(data, source);
    let n = ev.reg_n(target.bits())?;
    let prev = &target.bits()[..target.len() - 1];
    let d = guard(ev.reg_d(prev)?, || {
        format!("REG eligibility for '{}'", bits(prev))
    })?;
    Ok((n / d, d))
}

/// IPW estimates: a ratio of weighted sums for the mean outcome and a
/// Horvitz-Thompson average for eligibility.
pub fn estimate_ipw<N: NuisanceSource + ?Sized>(
    data: &PanelDataset,
    source: &N,
    target: &TreatmentHistory,
) -> Result<(f64, f64)> {
    check_target(data, target)?;
    let ev = Eval::new(data, source);
    let n = ev.ipw_n(target.bits())?;
    let prev = &target.bits()[..target.len() - 1];
    let d = guard(ev.ipw_d(prev)?, || {
        format!("IPW eligibility for '{}'", bits(prev))
    })?;
    Ok((n / d, d))
}

/// Per-unit EIF summands for `N(z̄_t)` and `D(z̄_{t-1})`.
pub fn estimate_dr_components<N: NuisanceSource + ?Sized>(
    data: &PanelDataset,
    source: &N,
    target: &TreatmentHistory,
) -> Result<EifValues> {
    check_target(data, target)?;
    let ev = Eval::new(data, source);
    let prev = &target.bits()[..target.len() - 1];
    Ok(EifValues {
        phi_n: vec![(target.clone(), ev.phi_n(target.bits())?)],
        phi_d: if prev.is_empty() {
            None
        } else {
            Some((target.prefix(prev.len()), ev.phi_d(prev)?))
        },
    })
}

/// `tau_t(z̄_{t-1})` by the chosen method.
pub fn estimate_ete<N: NuisanceSource + ?Sized>(
    data: &PanelDataset,
    source: &N,
    t: usize,
    history: &TreatmentHistory,
    method: Method,
) -> Result<EstimateReport> {
    if t == 0 || history.len() + 1 != t || t > data.horizon() {
        return Err(Error::InvalidConfig(format!(
            "tau@{t}:{history} is not defined on a horizon of {}",
            data.horizon()
        )));
    }
    let ev = Eval::new(data, source);
    let prev = history.bits();
    let h0 = history.then(0);
    let h1 = history.then(1);
    let risk_sets = vec![ev.risk(h0.bits()), ev.risk(h1.bits())];
    let label = || format!("tau@{t}:{history} ({method})");
    // Nobody eligible at t under the history: D is zero.
    if risk_sets[0].1 + risk_sets[1].1 == 0 {
        guard(0.0, label)?;
    }
    for (h, risk) in [&h0, &h1].into_iter().zip(&risk_sets) {
        require_followers(h, risk, label)?;
    }
    let estimand = Estimand::Ete {
        t,
        history: history.clone(),
    };
    let (n0, n1, d, eif, components) = match method {
        Method::Reg => (
            ev.reg_n(h0.bits())?,
            ev.reg_n(h1.bits())?,
            ev.reg_d(prev)?,
            None,
            None,
        ),
        Method::Ipw => (
            ev.ipw_n(h0.bits())?,
            ev.ipw_n(h1.bits())?,
            ev.ipw_d(prev)?,
            None,
            None,
        ),
        Method::Dr => {
            let p0 = ev.phi_n(h0.bits())?;
            let p1 = ev.phi_n(h1.bits())?;
            let pd = ev.phi_d(prev)?;
            let (n0, n1, d) = (mean(&p0), mean(&p1), mean(&pd));
            let d_ok = guard(d, label)?;
            let tau = (n1 - n0) / d_ok;
            let eif: Vec<f64> = (0..p0.len())
                .map(|i| (p1[i] - p0[i] - tau * pd[i]) / d_ok)
                .collect();
            let components = EifValues {
                phi_n: vec![(h0.clone(), p0), (h1.clone(), p1)],
                phi_d: (!prev.is_empty()).then(|| (history.clone(), pd)),
            };
            (n0, n1, d, Some(eif), Some(components))
        }
    };
    let d = guard(d, label)?;
    let std_error = eif.as_deref().map(eif_se);
    Ok(EstimateReport {
        estimand,
        method,
        estimate: (n1 - n0) / d,
        numerators: vec![(h0, n0), (h1, n1)],
        denominator: Some(d),
        eif,
        components,
        std_error,
        diagnostics: ev.diagnostics(risk_sets),
        interval: None,
    })
}

/// `theta(xi)`; histories without policy mass are skipped.
pub fn estimate_eoe<N: NuisanceSource + ?Sized>(
    data: &PanelDataset,
    source: &N,
    policy: &Policy,
    method: Method,
) -> Result<EstimateReport> {
    estimate_eoe_labeled(data, source, &Estimand::eoe(policy.clone()), method)
}

fn estimate_eoe_labeled<N: NuisanceSource + ?Sized>(
    data: &PanelDataset,
    source: &N,
    estimand: &Estimand,
    method: Method,
) -> Result<EstimateReport> {
    let Estimand::Eoe { policy, .. } = estimand else {
        unreachable!("caller passes an EOE estimand")
    };
    policy.validate(data.horizon())?;
    let ev = Eval::new(data, source);
    let support = policy.support(data.horizon());
    let mut numerators = Vec::with_capacity(support.len());
    let mut risk_sets = Vec::with_capacity(support.len());
    let mut estimate = 0.0;
    let mut phi_sum = vec![0.0; data.len()];
    let mut phi_n = Vec::new();
    for h in &support {
        let xi = policy.seq_prob(h.bits());
        let risk = ev.risk(h.bits());
        require_followers(h, &risk, || format!("{} ({method})", estimand.label()))?;
        let n = match method {
            Method::Reg => ev.reg_n(h.bits())?,
            Method::Ipw => ev.ipw_n(h.bits())?,
            Method::Dr => {
                let phi = ev.phi_n(h.bits())?;
                for (acc, v) in phi_sum.iter_mut().zip(&phi) {
                    *acc += xi * v;
                }
                let n = mean(&phi);
                phi_n.push((h.clone(), phi));
                n
            }
        };
        estimate += n * xi;
        numerators.push((h.clone(), n));
        risk_sets.push(risk);
    }
    let (eif, components) = if method == Method::Dr {
        let eif: Vec<f64> = phi_sum.iter().map(|v| v - estimate).collect();
        (Some(eif), Some(EifValues { phi_n, phi_d: None }))
    } else {
        (None, None)
    };
    let std_error = eif.as_deref().map(eif_se);
    Ok(EstimateReport {
        estimand: estimand.clone(),
        method,
        estimate,
        numerators,
        denominator: None,
        eif,
        components,
        std_error,
        diagnostics: ev.diagnostics(risk_sets),
        interval: None,
    })
}

/// Dispatches one estimand.
pub fn estimate_one<N: NuisanceSource + ?Sized>(
    data: &PanelDataset,
    source: &N,
    estimand: &Estimand,
    method: Method,
) -> Result<EstimateReport> {
    match estimand {
        Estimand::Ete { t, history } => estimate_ete(data, source, *t, history, method),
        Estimand::Eoe { .. } => estimate_eoe_labeled(data, source, estimand, method),
    }
}

/// Nuisance pieces needed for a set of estimands and methods.
pub fn requirements(
    estimands: &[Estimand],
    methods: &[Method],
    horizon: usize,
) -> Result<Requirements> {
    let needs_m = methods
        .iter()
        .any(|m| matches!(m, Method::Reg | Method::Dr));
    let needs_w = methods
        .iter()
        .any(|m| matches!(m, Method::Ipw | Method::Dr));
    let mut req = Requirements::default();
    let mut ys = BTreeSet::new();
    for e in estimands {
        match e {
            Estimand::Ete { t, history } => {
                if *t > horizon {
                    return Err(Error::InvalidConfig(format!(
                        "{e} lies beyond the data horizon {horizon}"
                    )));
                }
                if needs_m {
                    ys.insert(history.then(0));
                    ys.insert(history.then(1));
                    if !history.is_empty() {
                        req.s_targets.insert(history.clone());
                    }
                }
                if needs_w {
                    req.propensity_through = req.propensity_through.max(*t);
                }
            }
            Estimand::Eoe { policy, .. } => {
                policy.validate(horizon)?;
                let support = policy.support(horizon);
                if needs_m {
                    ys.extend(support.iter().cloned());
                }
                if needs_w {
                    let deepest = support.iter().map(|h| h.len()).max().unwrap_or(0);
                    req.propensity_through = req.propensity_through.max(deepest);
                }
            }
        }
    }
    req.ys_targets = ys;
    Ok(req)
}

/// Fits the nuisances once and evaluates every (estimand, method) pair, in
/// estimand-major order.
pub fn estimate(
    data: &PanelDataset,
    config: &LearnerConfig,
    estimands: &[Estimand],
    methods: &[Method],
) -> Result<Vec<EstimateReport>> {
    if estimands.is_empty() || methods.is_empty() {
        return Err(Error::InvalidConfig("nothing to estimate".into()));
    }
    let req = requirements(estimands, methods, data.horizon())?;
    let source = FittedNuisance::fit(data, config, &req)?;
    let mut out = Vec::with_capacity(estimands.len() * methods.len());
    for e in estimands {
        for &m in methods {
            out.push(estimate_one(data, &source, e, m)?);
        }
    }
    Ok(out)
}
