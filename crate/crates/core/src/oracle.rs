//! Ground truth. Exact enumeration over finite discrete populations (in
//! rational or floating arithmetic) and potential-outcome Monte Carlo for
//! the simulation design.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};
use std::path::Path;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::estimators::{Estimand, Policy};
use crate::nuisance::NuisanceSource;
use crate::panel::{CovariateSchema, PanelDataset, Period, TreatmentHistory, UnitRecord};
use crate::simlab::{draw_potentials, DgpConfig, Potentials};

/// Arithmetic the enumeration oracle runs in.
pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Send
    + Sync
{
    /// Parses `a/b`, an integer or a decimal.
    fn parse(text: &str) -> Option<Self>;
    fn from_f64(v: f64) -> Self;
    fn as_f64(&self) -> f64;
    fn render(&self) -> String;
    /// Exact equality for rationals, `1e-12` for floats.
    fn agrees(&self, other: &Self) -> bool;
    fn is_exact() -> bool;
}

impl Scalar for f64 {
    fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        match text.split_once('/') {
            Some((a, b)) => {
                let (a, b): (f64, f64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
                (b != 0.0).then(|| a / b)
            }
            None => text.parse().ok(),
        }
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(&self) -> f64 {
        *self
    }
    fn render(&self) -> String {
        self.to_string()
    }
    fn agrees(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-12 * self.abs().max(other.abs()).max(1.0)
    }
    fn is_exact() -> bool {
        false
    }
}

impl Scalar for BigRational {
    fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some((a, b)) = text.split_once('/') {
            let (a, b): (BigInt, BigInt) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            return (!b.is_zero()).then(|| BigRational::new(a, b));
        }
        if let Some((int, frac)) = text.split_once('.') {
            let negative = int.trim_start().starts_with('-');
            let digits: BigInt = format!("{}{}", int.trim_start_matches(['-', '+']), frac)
                .parse()
                .ok()?;
            let scale = num_traits::pow(BigInt::from(10), frac.len());
            let v = BigRational::new(digits, scale);
            return Some(if negative { -v } else { v });
        }
        text.parse::<BigInt>().ok().map(BigRational::from_integer)
    }
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite policy probability")
    }
    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn render(&self) -> String {
        self.to_string()
    }
    fn agrees(&self, other: &Self) -> bool {
        self == other
    }
    fn is_exact() -> bool {
        true
    }
}

/// Which table of a population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    /// Covariate distribution `l_t`.
    L,
    /// Treatment probability `w_t` (stored as `P(Z_t = 1)`).
    W,
    /// Eligibility probability `p_t`, `t >= 2`.
    P,
    /// Outcome mean `mu_t`.
    Mu,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPopulation {
    name: String,
    horizon: usize,
    covariate: String,
    time_invariant: bool,
    support: Vec<String>,
    l: Vec<BTreeMap<String, Value>>,
    w: Vec<BTreeMap<String, Value>>,
    p: Vec<BTreeMap<String, Value>>,
    mu: Vec<BTreeMap<String, Value>>,
}

type Tab<S> = BTreeMap<String, S>;

/// A finite population with one discrete covariate per period, described by
/// its observed-data tables. Outcomes are deterministic given history
/// (`Y_t = mu_t`). Table keys are `z̄;x̄` with comma-joined covariate values;
/// time-invariant populations carry a single covariate value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPopulation<S> {
    name: String,
    horizon: usize,
    covariate: String,
    time_invariant: bool,
    support: Vec<String>,
    values: Vec<f64>,
    l: Vec<Tab<S>>,
    w: Vec<Tab<S>>,
    p: Vec<Tab<S>>,
    mu: Vec<Tab<S>>,
}

/// One observed trajectory of the population with its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub prob: S,
    /// Covariate support index per eligible period.
    pub x: Vec<usize>,
    pub z: Vec<u8>,
}

impl<S> Trajectory<S> {
    pub fn eligible_through(&self) -> usize {
        self.z.len()
    }

    pub fn follows(&self, h: &[u8]) -> bool {
        h.len() <= self.z.len() && self.z[..h.len()] == *h
    }
}

fn hist(z: &[u8]) -> String {
    z.iter().map(|b| char::from(b'0' + b)).collect()
}

impl ExactPopulation<BigRational> {
    /// Two-period population with a binary time-invariant covariate.
    pub fn d1() -> Self {
        Self::from_json(include_str!("../fixtures/d1.json")).expect("bundled population")
    }

    /// Three-period population with a binary time-varying covariate.
    pub fn d2() -> Self {
        Self::from_json(include_str!("../fixtures/d2.json")).expect("bundled population")
    }

    /// `d1`, `d2` or a path to a population file.
    pub fn builtin_or_load(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "d1" => Ok(Self::d1()),
            "d2" => Ok(Self::d2()),
            _ => Self::load(name),
        }
    }

    /// A panel in which every trajectory appears in proportion to its
    /// probability, so that sample means equal population expectations.
    pub fn expand(&self) -> Result<PanelDataset> {
        let trajs = self.trajectories();
        let lcm = trajs
            .iter()
            .fold(BigInt::one(), |acc, t| acc.lcm(t.prob.denom()));
        let total: BigInt = trajs
            .iter()
            .map(|t| (t.prob.clone() * BigRational::from_integer(lcm.clone())).to_integer())
            .sum();
        if total > BigInt::from(5_000_000) {
            return Err(Error::InvalidConfig(format!(
                "population {} expands to {total} units",
                self.name
            )));
        }
        let schema = if self.time_invariant {
            CovariateSchema::new(&[self.covariate.as_str()], &[])
        } else {
            CovariateSchema::new(&[], &[self.covariate.as_str()])
        };
        let mut units = Vec::new();
        for traj in &trajs {
            let copies = (traj.prob.clone() * BigRational::from_integer(lcm.clone()))
                .to_integer()
                .to_usize()
                .expect("bounded above");
            let periods: Vec<Period> = (1..=traj.z.len())
                .map(|t| Period {
                    treatment: traj.z[t - 1],
                    outcome: self.mu_at(&traj.z[..t], &traj.x).as_f64(),
                    covariates: if self.time_invariant {
                        vec![]
                    } else {
                        vec![self.values[traj.x[t - 1]]]
                    },
                })
                .collect();
            let baseline = if self.time_invariant {
                vec![self.values[traj.x[0]]]
            } else {
                vec![]
            };
            for _ in 0..copies {
                units.push(UnitRecord {
                    id: format!("{}-{}", self.name, units.len() + 1),
                    baseline: baseline.clone(),
                    periods: periods.clone(),
                });
            }
        }
        PanelDataset::new(schema, units)
    }
}

impl<S: Scalar> ExactPopulation<S> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawPopulation =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("population: {e}")))?;
        if !(1..=3).contains(&raw.horizon) {
            return Err(Error::Schema(format!(
                "population horizon {} outside 1..=3",
                raw.horizon
            )));
        }
        if raw.support.is_empty() {
            return Err(Error::Schema(
                "population covariate support is empty".into(),
            ));
        }
        let values = raw
            .support
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Schema(format!("support value '{s}' is not numeric")))
            })
            .collect::<Result<Vec<f64>>>()?;
        for (i, v) in values.iter().enumerate() {
            if values[..i].contains(v) {
                return Err(Error::Schema(format!("support value {v} repeated")));
            }
        }
        let convert = |tables: Vec<BTreeMap<String, Value>>, what: &str| -> Result<Vec<Tab<S>>> {
            tables
                .into_iter()
                .map(|t| {
                    t.into_iter()
                        .map(|(k, v)| {
                            let text = match &v {
                                Value::String(s) => s.clone(),
                                Value::Number(n) => n.to_string(),
                                _ => String::new(),
                            };
                            let x = S::parse(&text).ok_or_else(|| {
                                Error::Schema(format!("{what}['{k}'] = {v} is not a number"))
                            })?;
                            Ok((k, x))
                        })
                        .collect()
                })
                .collect()
        };
        let pop = Self {
            l: convert(raw.l, "l")?,
            w: convert(raw.w, "w")?,
            p: convert(raw.p, "p")?,
            mu: convert(raw.mu, "mu")?,
            name: raw.name,
            horizon: raw.horizon,
            covariate: raw.covariate,
            time_invariant: raw.time_invariant,
            support: raw.support,
            values,
        };
        pop.validate()?;
        Ok(pop)
    }

    fn validate(&self) -> Result<()> {
        let t_max = self.horizon;
        let n_l = if self.time_invariant { 1 } else { t_max };
        let counts = [
            ("l", self.l.len(), n_l),
            ("w", self.w.len(), t_max),
            ("p", self.p.len(), t_max - 1),
            ("mu", self.mu.len(), t_max),
        ];
        for (what, got, want) in counts {
            if got != want {
                return Err(Error::Schema(format!(
                    "population needs {want} '{what}' tables, found {got}"
                )));
            }
        }
        let check_keys = |what: &str, table: &Tab<S>, keys: Vec<String>| -> Result<()> {
            for k in &keys {
                if !table.contains_key(k) {
                    return Err(Error::Schema(format!("{what} lacks entry '{k}'")));
                }
            }
            if let Some(extra) = table.keys().find(|k| !keys.contains(k)) {
                return Err(Error::Schema(format!(
                    "{what} has unexpected entry '{extra}'"
                )));
            }
            Ok(())
        };
        let (zero, one) = (S::zero(), S::one());
        for t in 1..=t_max {
            let mut w_keys = Vec::new();
            let mut mu_keys = Vec::new();
            for zp in TreatmentHistory::all(t - 1) {
                for xs in self.x_paths(t) {
                    w_keys.push(self.key(zp.bits(), &xs));
                    mu_keys.push(self.key(zp.then(0).bits(), &xs));
                    mu_keys.push(self.key(zp.then(1).bits(), &xs));
                }
            }
            check_keys(&format!("w[{t}]"), &self.w[t - 1], w_keys)?;
            check_keys(&format!("mu[{t}]"), &self.mu[t - 1], mu_keys)?;
            if let Some((k, v)) = self.w[t - 1]
                .iter()
                .find(|(_, v)| **v <= zero || **v >= one)
            {
                return Err(Error::OverlapViolation(format!(
                    "treatment probability w[{t}]['{k}'] = {} is not inside (0, 1)",
                    v.render()
                )));
            }
            if t >= 2 {
                let keys = TreatmentHistory::all(t - 1)
                    .flat_map(|zp| {
                        self.x_paths(t - 1)
                            .into_iter()
                            .map(move |xs| (zp.clone(), xs))
                    })
                    .map(|(zp, xs)| self.key(zp.bits(), &xs))
                    .collect();
                check_keys(&format!("p[{t}]"), &self.p[t - 2], keys)?;
                if let Some((k, v)) = self.p[t - 2].iter().find(|(_, v)| **v <= zero || **v > one) {
                    return Err(Error::OverlapViolation(format!(
                        "eligibility probability p[{t}]['{k}'] = {} is not in (0, 1]",
                        v.render()
                    )));
                }
            }
        }
        for t in 1..=n_l {
            let mut keys = Vec::new();
            for zp in TreatmentHistory::all(t - 1) {
                for prev in self
                    .x_paths(t - 1)
                    .into_iter()
                    .chain((t == 1).then(Vec::new))
                {
                    if t > 1 && prev.is_empty() {
                        continue;
                    }
                    let mut total = S::zero();
                    for v in 0..self.support.len() {
                        let mut xs = prev.clone();
                        xs.push(v);
                        let k = self.key(zp.bits(), &xs);
                        if let Some(p) = self.l[t - 1].get(&k) {
                            if *p < zero || *p > one {
                                return Err(Error::Schema(format!(
                                    "l[{t}]['{k}'] = {} is not a probability",
                                    p.render()
                                )));
                            }
                            total = total + p.clone();
                        }
                        keys.push(k);
                    }
                    if !total.agrees(&one) {
                        return Err(Error::Schema(format!(
                            "l[{t}] masses for history '{}' sum to {}",
                            zp,
                            total.render()
                        )));
                    }
                }
            }
            check_keys(&format!("l[{t}]"), &self.l[t - 1], keys)?;
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn time_invariant(&self) -> bool {
        self.time_invariant
    }

    pub fn support(&self) -> &[String] {
        &self.support
    }

    pub fn map<U>(&self, f: impl Fn(&S) -> U) -> ExactPopulation<U> {
        let conv = |tabs: &Vec<Tab<S>>| -> Vec<Tab<U>> {
            tabs.iter()
                .map(|t| t.iter().map(|(k, v)| (k.clone(), f(v))).collect())
                .collect()
        };
        ExactPopulation {
            name: self.name.clone(),
            horizon: self.horizon,
            covariate: self.covariate.clone(),
            time_invariant: self.time_invariant,
            support: self.support.clone(),
            values: self.values.clone(),
            l: conv(&self.l),
            w: conv(&self.w),
            p: conv(&self.p),
            mu: conv(&self.mu),
        }
    }

    pub fn to_f64(&self) -> ExactPopulation<f64> {
        self.map(|v| v.as_f64())
    }

    /// Copy with one table entry replaced. No validation is applied, so the
    /// result may describe an inconsistent model.
    pub fn with_entry(&self, table: Table, t: usize, key: &str, value: S) -> Result<Self> {
        let mut out = self.clone();
        let slot = match table {
            Table::L => out.l.get_mut(t.wrapping_sub(1)),
            Table::W => out.w.get_mut(t.wrapping_sub(1)),
            Table::P => out.p.get_mut(t.wrapping_sub(2)),
            Table::Mu => out.mu.get_mut(t.wrapping_sub(1)),
        };
        let entry = slot
            .and_then(|tab| tab.get_mut(key))
            .ok_or_else(|| Error::InvalidConfig(format!("no {table:?} entry '{key}' at t={t}")))?;
        *entry = value;
        Ok(out)
    }

    /// Table key for treatment history `z` and covariate path `xs`.
    fn key(&self, z: &[u8], xs: &[usize]) -> String {
        let x = if self.time_invariant {
            self.support[xs[0]].clone()
        } else {
            xs.iter()
                .map(|&i| self.support[i].as_str())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("{};{x}", hist(z))
    }

    /// Every covariate path of length `k` (constant paths when invariant).
    pub fn x_paths(&self, k: usize) -> Vec<Vec<usize>> {
        let m = self.support.len();
        if k == 0 {
            return vec![];
        }
        if self.time_invariant {
            return (0..m).map(|v| vec![v; k]).collect();
        }
        let mut out = vec![vec![]];
        for _ in 0..k {
            out = out
                .into_iter()
                .flat_map(|p: Vec<usize>| {
                    (0..m).map(move |v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out
    }

    fn get(table: &Tab<S>, key: &str) -> S {
        table.get(key).cloned().expect("validated population table")
    }

    /// `l_t(z̄_{t-1}, x̄_t)`: probability of `xs[t-1]` given the past.
    pub fn l_at(&self, t: usize, zp: &[u8], xs: &[usize]) -> S {
        if self.time_invariant && t > 1 {
            return if xs[t - 1] == xs[0] {
                S::one()
            } else {
                S::zero()
            };
        }
        Self::get(&self.l[t - 1], &self.key(zp, &xs[..t]))
    }

    /// `w_t(z̄_t, x̄_t)` with `t = z.len()`.
    pub fn w_at(&self, z: &[u8], xs: &[usize]) -> S {
        let t = z.len();
        let p1 = Self::get(&self.w[t - 1], &self.key(&z[..t - 1], &xs[..t]));
        if z[t - 1] == 1 {
            p1
        } else {
            S::one() - p1
        }
    }

    /// `p_t(z̄_{t-1}, x̄_{t-1})`, `t >= 2`.
    pub fn p_at(&self, t: usize, zp: &[u8], xs: &[usize]) -> S {
        Self::get(&self.p[t - 2], &self.key(zp, &xs[..t - 1]))
    }

    /// `mu_t(z̄_t, x̄_t)` with `t = z.len()`.
    pub fn mu_at(&self, z: &[u8], xs: &[usize]) -> S {
        Self::get(&self.mu[z.len() - 1], &self.key(z, &xs[..z.len()]))
    }

    /// Possible `x_t` after `x̄_{t-1}` with their probabilities.
    fn next_x(&self, t: usize, zp: &[u8], prev: &[usize]) -> Vec<(usize, S)> {
        if self.time_invariant && t > 1 {
            return vec![(prev[0], S::one())];
        }
        let zero = S::zero();
        (0..self.support.len())
            .filter_map(|v| {
                let mut xs = prev.to_vec();
                xs.push(v);
                let l = self.l_at(t, zp, &xs);
                (l > zero).then_some((v, l))
            })
            .collect()
    }

    /// `pi_k(z̄_k, x̄_k)` with `k = z.len()`.
    pub fn pi(&self, z: &[u8], xs: &[usize]) -> S {
        (1..=z.len()).fold(S::one(), |acc, s| acc * self.w_at(&z[..s], xs))
    }

    /// `prod_{s<=k} l_s prod_{2<=s<=k} p_s` along `z` with `k = xs.len()`:
    /// the mass of reaching `S_k = 1` with covariates `x̄_k` when `z̄_{k-1}`
    /// is imposed.
    pub fn g(&self, z: &[u8], xs: &[usize]) -> S {
        let k = xs.len();
        let mut acc = S::one();
        for s in 1..=k {
            acc = acc * self.l_at(s, &z[..s - 1], xs);
            if s >= 2 {
                acc = acc * self.p_at(s, &z[..s - 1], xs);
            }
        }
        acc
    }

    /// `m_{Y_t S_t}(z̄_k, x̄_k)` for target `z̄_t`, `k = xs.len()`, by the
    /// backward recursion over the tables.
    pub fn m_ys(&self, target: &[u8], xs: &[usize]) -> S {
        let (t, k) = (target.len(), xs.len());
        if k == t {
            return self.mu_at(target, xs);
        }
        let zk = &target[..k];
        let inner = self
            .next_x(k + 1, zk, xs)
            .into_iter()
            .fold(S::zero(), |acc, (v, l)| {
                let mut next = xs.to_vec();
                next.push(v);
                acc + l * self.m_ys(target, &next)
            });
        self.p_at(k + 1, zk, xs) * inner
    }

    /// `m_{S_t}(z̄_k, x̄_k)` for `prev = z̄_{t-1}`, `k = xs.len() <= t - 1`.
    pub fn m_s(&self, prev: &[u8], xs: &[usize]) -> S {
        let k = xs.len();
        let zk = &prev[..k];
        let p = self.p_at(k + 1, zk, xs);
        if k == prev.len() {
            return p;
        }
        let inner = self
            .next_x(k + 1, zk, xs)
            .into_iter()
            .fold(S::zero(), |acc, (v, l)| {
                let mut next = xs.to_vec();
                next.push(v);
                acc + l * self.m_s(prev, &next)
            });
        p * inner
    }

    /// Every observed trajectory with positive probability.
    pub fn trajectories(&self) -> Vec<Trajectory<S>> {
        let mut out = Vec::new();
        self.grow(1, S::one(), &mut vec![], &mut vec![], &mut out);
        out
    }

    fn grow(
        &self,
        t: usize,
        prob: S,
        x: &mut Vec<usize>,
        z: &mut Vec<u8>,
        out: &mut Vec<Trajectory<S>>,
    ) {
        let zero = S::zero();
        for (v, l) in self.next_x(t, z, x) {
            x.push(v);
            for zt in [0u8, 1] {
                z.push(zt);
                let pr = prob.clone() * l.clone() * self.w_at(z, x);
                if pr > zero {
                    if t == self.horizon {
                        out.push(Trajectory {
                            prob: pr,
                            x: x.clone(),
                            z: z.clone(),
                        });
                    } else {
                        let p = self.p_at(t + 1, z, x);
                        let stop = pr.clone() * (S::one() - p.clone());
                        if stop > zero {
                            out.push(Trajectory {
                                prob: stop,
                                x: x.clone(),
                                z: z.clone(),
                            });
                        }
                        if p > zero {
                            self.grow(t + 1, pr * p, x, z, out);
                        }
                    }
                }
                z.pop();
            }
            x.pop();
        }
    }

    /// Regression route for `E{Y_t(z̄_t) S_t(z̄_{t-1})}`: covariates and
    /// eligibility integrated out along the imposed history.
    pub fn regression_n(&self, target: &[u8]) -> S {
        self.x_paths(target.len())
            .iter()
            .fold(S::zero(), |acc, xs| {
                acc + self.g(target, xs) * self.mu_at(target, xs)
            })
    }

    /// Regression route for `P{S_t(z̄_{t-1}) = 1}`.
    pub fn regression_d(&self, prev: &[u8]) -> S {
        if prev.is_empty() {
            return S::one();
        }
        let t = prev.len() + 1;
        self.x_paths(t - 1).iter().fold(S::zero(), |acc, xs| {
            acc + self.g(prev, xs) * self.p_at(t, prev, xs)
        })
    }

    /// Time-invariant form: `E{mu_t(z̄_t, X) prod_s p_s(z̄_{s-1}, X)}`.
    fn invariant_n(&self, target: &[u8]) -> S {
        let t = target.len();
        (0..self.support.len()).fold(S::zero(), |acc, v| {
            let xs = vec![v; t];
            let mut term = Self::get(&self.l[0], &self.key(&[], &xs)) * self.mu_at(target, &xs);
            for s in 2..=t {
                term = term * self.p_at(s, &target[..s - 1], &xs);
            }
            acc + term
        })
    }

    fn invariant_d(&self, prev: &[u8]) -> S {
        let t = prev.len() + 1;
        (0..self.support.len()).fold(S::zero(), |acc, v| {
            let xs = vec![v; t];
            let mut term = Self::get(&self.l[0], &self.key(&[], &xs));
            for s in 2..=t {
                term = term * self.p_at(s, &prev[..s - 1], &xs);
            }
            acc + term
        })
    }
}

/// Weighting route for `E{Y_t(z̄_t) S_t(z̄_{t-1})}` over the trajectories of
/// `law`, with propensities taken from `model`.
pub fn weighting_n<S: Scalar>(
    law: &ExactPopulation<S>,
    trajs: &[Trajectory<S>],
    model: &ExactPopulation<S>,
    target: &[u8],
) -> S {
    trajs
        .iter()
        .filter(|tr| tr.follows(target))
        .fold(S::zero(), |acc, tr| {
            acc + tr.prob.clone() * law.mu_at(target, &tr.x) / model.pi(target, &tr.x)
        })
}

/// Weighting route for `P{S_t(z̄_{t-1}) = 1}`.
pub fn weighting_d<S: Scalar>(
    trajs: &[Trajectory<S>],
    model: &ExactPopulation<S>,
    prev: &[u8],
) -> S {
    if prev.is_empty() {
        return S::one();
    }
    let t = prev.len() + 1;
    trajs
        .iter()
        .filter(|tr| tr.eligible_through() >= t && tr.follows(prev))
        .fold(S::zero(), |acc, tr| {
            acc + tr.prob.clone() / model.pi(prev, &tr.x)
        })
}

/// Influence summand for `N(z̄_t)` on one trajectory of `law`, with the
/// regression functions and propensities of `model`.
pub fn phi_n<S: Scalar>(
    law: &ExactPopulation<S>,
    model: &ExactPopulation<S>,
    tr: &Trajectory<S>,
    target: &[u8],
) -> S {
    let t = target.len();
    let mut phi = model.m_ys(target, &tr.x[..1]);
    let mut m_k = phi.clone();
    for k in 1..=t {
        if !tr.follows(&target[..k]) {
            break;
        }
        let next = if k == t {
            law.mu_at(target, &tr.x)
        } else if tr.eligible_through() > k {
            model.m_ys(target, &tr.x[..k + 1])
        } else {
            S::zero()
        };
        phi = phi + (next.clone() - m_k) / model.pi(&target[..k], &tr.x);
        m_k = next;
    }
    phi
}

/// Influence summand for `D(z̄_{t-1})`; identically 1 for `t = 1`.
pub fn phi_d<S: Scalar>(model: &ExactPopulation<S>, tr: &Trajectory<S>, prev: &[u8]) -> S {
    let top = prev.len();
    if top == 0 {
        return S::one();
    }
    let mut phi = model.m_s(prev, &tr.x[..1]);
    let mut m_k = phi.clone();
    for k in 1..=top {
        if !tr.follows(&prev[..k]) {
            break;
        }
        let next = if k == top {
            if tr.eligible_through() > top {
                S::one()
            } else {
                S::zero()
            }
        } else if tr.eligible_through() > k {
            model.m_s(prev, &tr.x[..k + 1])
        } else {
            S::zero()
        };
        phi = phi + (next.clone() - m_k) / model.pi(&prev[..k], &tr.x);
        m_k = next;
    }
    phi
}

fn expectation<S: Scalar>(trajs: &[Trajectory<S>], f: impl Fn(&Trajectory<S>) -> S) -> S {
    trajs
        .iter()
        .fold(S::zero(), |acc, tr| acc + tr.prob.clone() * f(tr))
}

/// Analytic bias of the population-level DR numerator when `model`
/// replaces the true nuisances of `law`:
/// `sum_j sum_x g_j (m~_j - m_j)(pi_{j-1}/pi~_{j-1} - pi_j/pi~_j)`.
pub fn dr_bias_formula<S: Scalar>(
    law: &ExactPopulation<S>,
    model: &ExactPopulation<S>,
    target: &[u8],
) -> S {
    bias_sum(law, model, target, target.len(), |pop, xs| {
        pop.m_ys(target, xs)
    })
}

/// Analytic bias of the population-level DR eligibility term.
pub fn dr_bias_formula_d<S: Scalar>(
    law: &ExactPopulation<S>,
    model: &ExactPopulation<S>,
    prev: &[u8],
) -> S {
    bias_sum(law, model, prev, prev.len(), |pop, xs| pop.m_s(prev, xs))
}

fn bias_sum<S: Scalar>(
    law: &ExactPopulation<S>,
    model: &ExactPopulation<S>,
    z: &[u8],
    top: usize,
    m: impl Fn(&ExactPopulation<S>, &[usize]) -> S,
) -> S {
    let mut total = S::zero();
    for j in 1..=top {
        for xs in law.x_paths(j) {
            let g = law.g(z, &xs);
            if g == S::zero() {
                continue;
            }
            let ratio = |k: usize| {
                if k == 0 {
                    S::one()
                } else {
                    law.pi(&z[..k], &xs) / model.pi(&z[..k], &xs)
                }
            };
            total = total + g * (m(model, &xs) - m(law, &xs)) * (ratio(j - 1) - ratio(j));
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthMethod {
    /// Enumeration over a finite population.
    Exact,
    /// Closed form implied by the design.
    Analytic,
    /// Potential-outcome Monte Carlo.
    Mc,
}

/// A ground-truth value with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleTruth {
    pub estimand: String,
    pub value: f64,
    /// Rational rendering when computed exactly.
    pub exact: Option<String>,
    pub method: TruthMethod,
    pub mc_se: Option<f64>,
    /// `E{Y_t(z̄_t) S_t(z̄_{t-1})}` per history.
    pub numerators: Vec<(String, f64)>,
    /// `P{S_t(z̄_{t-1}) = 1}` (ETE only).
    pub denominator: Option<f64>,
}

impl OracleTruth {
    pub fn analytic(estimand: String, value: f64) -> Self {
        Self {
            estimand,
            value,
            exact: None,
            method: TruthMethod::Analytic,
            mc_se: Some(0.0),
            numerators: vec![],
            denominator: None,
        }
    }
}

/// Truth by enumeration. Both identification routes are evaluated and must
/// agree before a value is returned.
pub fn enumerate_truth<S: Scalar>(
    pop: &ExactPopulation<S>,
    estimand: &Estimand,
) -> Result<OracleTruth> {
    let trajs = pop.trajectories();
    let numerator = |h: &[u8]| -> Result<S> {
        let a = pop.regression_n(h);
        let b = weighting_n(pop, &trajs, pop, h);
        if !a.agrees(&b) {
            return Err(Error::Inconsistent(format!(
                "E{{Y S}} for '{}': regression route {} vs weighting route {}",
                hist(h),
                a.render(),
                b.render()
            )));
        }
        Ok(a)
    };
    match estimand {
        Estimand::Ete { t, history } => {
            if *t > pop.horizon {
                return Err(Error::InvalidConfig(format!(
                    "{estimand} beyond the population horizon {}",
                    pop.horizon
                )));
            }
            let prev = history.bits();
            let d_a = pop.regression_d(prev);
            let d_b = weighting_d(&trajs, pop, prev);
            if !d_a.agrees(&d_b) {
                return Err(Error::Inconsistent(format!(
                    "P{{S}} for '{history}': regression route {} vs weighting route {}",
                    d_a.render(),
                    d_b.render()
                )));
            }
            if d_a <= S::zero() {
                return Err(Error::DegenerateDenominator {
                    value: d_a.as_f64(),
                    context: estimand.label(),
                });
            }
            let (h0, h1) = (history.then(0), history.then(1));
            let n0 = numerator(h0.bits())?;
            let n1 = numerator(h1.bits())?;
            let tau = (n1.clone() - n0.clone()) / d_a.clone();
            Ok(OracleTruth {
                estimand: estimand.label(),
                value: tau.as_f64(),
                exact: S::is_exact().then(|| tau.render()),
                method: TruthMethod::Exact,
                mc_se: None,
                numerators: vec![(h0.to_string(), n0.as_f64()), (h1.to_string(), n1.as_f64())],
                denominator: Some(d_a.as_f64()),
            })
        }
        Estimand::Eoe { policy, .. } => {
            policy.validate(pop.horizon)?;
            let mut theta = S::zero();
            let mut numerators = Vec::new();
            for h in policy.support(pop.horizon) {
                let n = numerator(h.bits())?;
                numerators.push((h.to_string(), n.as_f64()));
                theta = theta + S::from_f64(policy.seq_prob(h.bits())) * n;
            }
            Ok(OracleTruth {
                estimand: estimand.label(),
                value: theta.as_f64(),
                exact: S::is_exact().then(|| theta.render()),
                method: TruthMethod::Exact,
                mc_se: None,
                numerators,
                denominator: None,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub detail: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub population: String,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn failed(&self, name: &str) -> usize {
        self.checks
            .iter()
            .filter(|c| c.name == name && !c.passed)
            .count()
    }

    fn push<S: Scalar>(&mut self, name: &str, detail: String, got: &S, want: &S) {
        let passed = got.agrees(want);
        self.checks.push(Check {
            name: name.to_string(),
            detail: if passed {
                detail
            } else {
                format!("{detail}: {} != {}", got.render(), want.render())
            },
            passed,
        });
    }
}

/// Every identity of the population against itself.
pub fn verify_recursions<S: Scalar>(pop: &ExactPopulation<S>) -> VerificationReport {
    verify_against(pop, pop)
}

/// Checks the tables of `model` against the observed law of `law`:
///
/// * `routes`: regression route (model tables) vs weighting route (law
///   trajectories, model propensities);
/// * `recursion`: regression functions built from conditional expectations
///   of the observed law vs forward enumeration over the model tables;
/// * `shortcut` / `invariant-formula`: product forms for time-invariant
///   covariates;
/// * `eif-mean`, `eif-centered`, `eif-ratio`: influence functions built from
///   the model, averaged over the law;
/// * `bias-formula`: the analytic DR bias equals the realized deviation.
pub fn verify_against<S: Scalar>(
    law: &ExactPopulation<S>,
    model: &ExactPopulation<S>,
) -> VerificationReport {
    let mut rep = VerificationReport {
        population: model.name.clone(),
        checks: Vec::new(),
    };
    let trajs = law.trajectories();
    let horizon = law.horizon.min(model.horizon);

    for t in 1..=horizon {
        for target in TreatmentHistory::all(t) {
            let z = target.bits();
            rep.push(
                "routes",
                format!("E{{Y S}} '{target}'"),
                &model.regression_n(z),
                &weighting_n(law, &trajs, model, z),
            );
            let mut memo = HashMap::new();
            for k in 1..=t {
                for xs in law.x_paths(k) {
                    if let Some(m) = observed_m(law, &trajs, z, &xs, false, &mut memo) {
                        rep.push(
                            "recursion",
                            format!("m_YS '{target}' at k={k} x={xs:?}"),
                            &model.m_ys(z, &xs),
                            &m,
                        );
                        if model.time_invariant {
                            let full = vec![xs[0]; t];
                            let mut short = model.mu_at(z, &full);
                            for s in k + 1..=t {
                                short = short * model.p_at(s, &z[..s - 1], &full);
                            }
                            rep.push(
                                "shortcut",
                                format!("m_YS '{target}' at k={k} x={xs:?}"),
                                &short,
                                &model.m_ys(z, &xs),
                            );
                        }
                    }
                }
            }
            let n_law = law.regression_n(z);
            let mean_phi = expectation(&trajs, |tr| phi_n(law, model, tr, z));
            rep.push("eif-mean", format!("phi_N '{target}'"), &mean_phi, &n_law);
            rep.push(
                "bias-formula",
                format!("phi_N '{target}'"),
                &(mean_phi - n_law),
                &dr_bias_formula(law, model, z),
            );
            if model.time_invariant {
                rep.push(
                    "invariant-formula",
                    format!("E{{Y S}} '{target}'"),
                    &model.invariant_n(z),
                    &model.regression_n(z),
                );
            }
        }
        if t >= 2 {
            for prev in TreatmentHistory::all(t - 1) {
                let z = prev.bits();
                rep.push(
                    "routes",
                    format!("P{{S_{t}}} '{prev}'"),
                    &model.regression_d(z),
                    &weighting_d(&trajs, model, z),
                );
                let mut memo = HashMap::new();
                for k in 1..t {
                    for xs in law.x_paths(k) {
                        if let Some(m) = observed_m(law, &trajs, z, &xs, true, &mut memo) {
                            rep.push(
                                "recursion",
                                format!("m_S '{prev}' at k={k} x={xs:?}"),
                                &model.m_s(z, &xs),
                                &m,
                            );
                            if model.time_invariant {
                                let full = vec![xs[0]; t];
                                let mut short = S::one();
                                for s in k + 1..=t {
                                    short = short * model.p_at(s, &z[..s - 1], &full);
                                }
                                rep.push(
                                    "shortcut",
                                    format!("m_S '{prev}' at k={k} x={xs:?}"),
                                    &short,
                                    &model.m_s(z, &xs),
                                );
                            }
                        }
                    }
                }
                let d_law = law.regression_d(z);
                let mean_phi = expectation(&trajs, |tr| phi_d(model, tr, z));
                rep.push("eif-mean", format!("phi_D '{prev}'"), &mean_phi, &d_law);
                rep.push(
                    "bias-formula",
                    format!("phi_D '{prev}'"),
                    &(mean_phi - d_law),
                    &dr_bias_formula_d(law, model, z),
                );
                if model.time_invariant {
                    rep.push(
                        "invariant-formula",
                        format!("P{{S_{t}}} '{prev}'"),
                        &model.invariant_d(z),
                        &model.regression_d(z),
                    );
                }
            }
        }
        // Influence function of tau is centered and solves for tau.
        for prev in TreatmentHistory::all(t - 1) {
            let z = prev.bits();
            let (h0, h1) = (prev.then(0), prev.then(1));
            let d = law.regression_d(z);
            let tau = (law.regression_n(h1.bits()) - law.regression_n(h0.bits())) / d.clone();
            let centered = expectation(&trajs, |tr| {
                (phi_n(law, model, tr, h1.bits())
                    - phi_n(law, model, tr, h0.bits())
                    - tau.clone() * phi_d(model, tr, z))
                    / d.clone()
            });
            rep.push(
                "eif-centered",
                format!("phi_tau '{prev}'"),
                &centered,
                &S::zero(),
            );
            let num = expectation(&trajs, |tr| {
                phi_n(law, model, tr, h1.bits()) - phi_n(law, model, tr, h0.bits())
            });
            let den = expectation(&trajs, |tr| phi_d(model, tr, z));
            if den > S::zero() {
                rep.push("eif-ratio", format!("tau@{t}:{prev}"), &(num / den), &tau);
            }
        }
    }
    for a in [0u8, 1] {
        let policy = Policy::Always(a);
        let support = policy.support(horizon);
        let theta = support
            .iter()
            .fold(S::zero(), |acc, h| acc + law.regression_n(h.bits()));
        let centered = expectation(&trajs, |tr| {
            support
                .iter()
                .fold(S::zero(), |acc, h| acc + phi_n(law, model, tr, h.bits()))
                - theta.clone()
        });
        rep.push(
            "eif-centered",
            format!("phi_theta all:{a}"),
            &centered,
            &S::zero(),
        );
    }
    rep
}

/// Regression function evaluated from conditional expectations of the
/// observed law, `None` on a conditioning cell without mass. With
/// `eligibility` the terminal value is `S_t` for `target = z̄_{t-1}`.
fn observed_m<S: Scalar>(
    law: &ExactPopulation<S>,
    trajs: &[Trajectory<S>],
    target: &[u8],
    xs: &[usize],
    eligibility: bool,
    memo: &mut HashMap<Vec<usize>, Option<S>>,
) -> Option<S> {
    if let Some(v) = memo.get(xs) {
        return v.clone();
    }
    let k = xs.len();
    let top = target.len();
    let cell: Vec<&Trajectory<S>> = trajs
        .iter()
        .filter(|tr| tr.follows(&target[..k]) && tr.x[..k] == *xs)
        .collect();
    let mass = cell.iter().fold(S::zero(), |acc, tr| acc + tr.prob.clone());
    let value = if mass == S::zero() {
        None
    } else {
        let mut sum = S::zero();
        for tr in &cell {
            let term = if !eligibility && k == top {
                law.mu_at(target, &tr.x)
            } else if tr.eligible_through() > k {
                if eligibility && k == top {
                    S::one()
                } else {
                    match observed_m(law, trajs, target, &tr.x[..k + 1], eligibility, memo) {
                        Some(v) => v,
                        None => continue,
                    }
                }
            } else {
                S::zero()
            };
            sum = sum + tr.prob.clone() * term;
        }
        Some(sum / mass)
    };
    memo.insert(xs.to_vec(), value.clone());
    value
}

/// Which tables a perturbation moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Perturbation {
    pub w: bool,
    pub p: bool,
    pub mu: bool,
}

impl Perturbation {
    pub const ALL: Perturbation = Perturbation {
        w: true,
        p: true,
        mu: true,
    };
}

impl ExactPopulation<f64> {
    /// Smooth one-parameter path through the tables: probabilities move by
    /// `eps * q(1 - q) * g`, outcome means by `eps * g`, with a fixed
    /// direction `g` depending on the history and covariates.
    pub fn perturbed(&self, eps: f64, which: Perturbation) -> Self {
        let dir = |key: &str| {
            let (z, x) = key.split_once(';').unwrap_or((key, ""));
            let ones = z.bytes().filter(|&b| b == b'1').count() as f64;
            let xs: f64 = x.split(',').filter_map(|v| v.parse::<f64>().ok()).sum();
            1.0 + 0.5 * ones - 0.75 * xs + 0.25 * z.len() as f64
        };
        let prob = |tabs: &mut Vec<Tab<f64>>| {
            for tab in tabs {
                for (k, q) in tab.iter_mut() {
                    *q += eps * *q * (1.0 - *q) * dir(k);
                }
            }
        };
        let mut out = self.clone();
        if which.w {
            prob(&mut out.w);
        }
        if which.p {
            prob(&mut out.p);
        }
        if which.mu {
            for tab in &mut out.mu {
                for (k, m) in tab.iter_mut() {
                    *m += eps * dir(k);
                }
            }
        }
        out
    }
}

/// Nuisance source backed by population tables, for panels whose units
/// carry the population's covariate (e.g. [`ExactPopulation::expand`]).
#[derive(Debug, Clone)]
pub struct TableNuisance {
    pop: ExactPopulation<f64>,
}

impl TableNuisance {
    pub fn new(pop: ExactPopulation<f64>) -> Self {
        Self { pop }
    }

    pub fn population(&self) -> &ExactPopulation<f64> {
        &self.pop
    }

    fn xs(&self, rec: &UnitRecord, k: usize) -> Result<Vec<usize>> {
        let index = |v: f64| {
            self.pop.values.iter().position(|s| *s == v).ok_or_else(|| {
                Error::Schema(format!(
                    "covariate value {v} outside the population support"
                ))
            })
        };
        if self.pop.time_invariant {
            let v = *rec
                .baseline
                .first()
                .ok_or_else(|| Error::Schema("unit lacks the population covariate".into()))?;
            return Ok(vec![index(v)?; k]);
        }
        (0..k)
            .map(|s| {
                let p = rec.periods.get(s).ok_or_else(|| {
                    Error::InvalidConfig(format!("unit '{}' is not eligible at {}", rec.id, s + 1))
                })?;
                index(
                    *p.covariates.first().ok_or_else(|| {
                        Error::Schema("unit lacks the population covariate".into())
                    })?,
                )
            })
            .collect()
    }
}

impl NuisanceSource for TableNuisance {
    fn propensity(&self, _unit: usize, rec: &UnitRecord, z: &[u8]) -> Result<f64> {
        let xs = self.xs(rec, z.len())?;
        Ok(self.pop.w_at(z, &xs))
    }

    fn m_ys(&self, _unit: usize, rec: &UnitRecord, target: &[u8], k: usize) -> Result<f64> {
        let xs = self.xs(rec, k)?;
        Ok(self.pop.m_ys(target, &xs))
    }

    fn m_s(&self, _unit: usize, rec: &UnitRecord, target: &[u8], k: usize) -> Result<f64> {
        let xs = self.xs(rec, k)?;
        Ok(self.pop.m_s(target, &xs))
    }
}

/// Draws per Monte Carlo block; blocks use consecutive streams.
pub const MC_BLOCK: u64 = 1 << 16;

/// Running moments of a pair `(d, s)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: f64,
    md: f64,
    ms: f64,
    cdd: f64,
    css: f64,
    cds: f64,
}

impl Moments {
    fn push(&mut self, d: f64, s: f64) {
        self.n += 1.0;
        let (dd, ds) = (d - self.md, s - self.ms);
        self.md += dd / self.n;
        self.ms += ds / self.n;
        self.cdd += dd * (d - self.md);
        self.css += ds * (s - self.ms);
        self.cds += dd * (s - self.ms);
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let (dd, ds) = (o.md - self.md, o.ms - self.ms);
        let f = self.n * o.n / n;
        self.cdd += o.cdd + dd * dd * f;
        self.css += o.css + ds * ds * f;
        self.cds += o.cds + dd * ds * f;
        self.md += dd * o.n / n;
        self.ms += ds * o.n / n;
        self.n = n;
    }
}

/// Per-draw contribution `(d, s)` of one estimand: the estimand is
/// `E(d) / E(s)`.
enum Term {
    Ete {
        h0: Vec<u8>,
        h1: Vec<u8>,
        prev: Vec<u8>,
    },
    Eoe(Vec<(Vec<u8>, f64)>),
}

impl Term {
    fn eval(&self, p: &Potentials) -> (f64, f64) {
        match self {
            Term::Ete { h0, h1, prev } => {
                if p.s(prev) {
                    (p.y(h1) - p.y(h0), 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Term::Eoe(parts) => {
                let d = parts
                    .iter()
                    .filter(|(h, _)| p.s(&h[..h.len() - 1]))
                    .map(|(h, xi)| xi * p.y(h))
                    .sum();
                (d, 1.0)
            }
        }
    }
}

/// Potential-outcome Monte Carlo truths for the simulation design, all
/// estimands from the same draws. Deterministic in `seed` for any thread
/// count.
pub fn mc_truths(
    cfg: &DgpConfig,
    estimands: &[Estimand],
    draws: u64,
    seed: u64,
) -> Result<Vec<OracleTruth>> {
    if draws < 2 {
        return Err(Error::InvalidConfig(
            "Monte Carlo truth needs at least 2 draws".into(),
        ));
    }
    let terms = estimands
        .iter()
        .map(|e| match e {
            Estimand::Ete { t, history } if *t <= 3 => Ok(Term::Ete {
                h0: history.then(0).bits().to_vec(),
                h1: history.then(1).bits().to_vec(),
                prev: history.bits().to_vec(),
            }),
            Estimand::Eoe { policy, .. } => {
                policy.validate(3)?;
                Ok(Term::Eoe(
                    policy
                        .support(3)
                        .into_iter()
                        .map(|h| {
                            let xi = policy.seq_prob(h.bits());
                            (h.bits().to_vec(), xi)
                        })
                        .collect(),
                ))
            }
            _ => Err(Error::InvalidConfig(format!(
                "{e} lies beyond the 3-period design"
            ))),
        })
        .collect::<Result<Vec<Term>>>()?;
    let blocks = draws.div_ceil(MC_BLOCK);
    let partial: Vec<Vec<Moments>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let size = MC_BLOCK.min(draws - b * MC_BLOCK);
            let mut acc = vec![Moments::default(); terms.len()];
            for _ in 0..size {
                let p = draw_potentials(cfg, &mut rng);
                for (m, term) in acc.iter_mut().zip(&terms) {
                    let (d, s) = term.eval(&p);
                    m.push(d, s);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Moments::default(); terms.len()];
    for block in &partial {
        for (t, m) in total.iter_mut().zip(block) {
            t.merge(m);
        }
    }
    Ok(estimands
        .iter()
        .zip(&total)
        .map(|(e, m)| {
            let value = m.md / m.ms;
            let var = (m.cdd - 2.0 * value * m.cds + value * value * m.css) / (m.n - 1.0);
            let se = (var / m.n).sqrt() / m.ms;
            OracleTruth {
                estimand: e.label(),
                value,
                exact: None,
                method: TruthMethod::Mc,
                mc_se: Some(se),
                numerators: vec![],
                denominator: matches!(e, Estimand::Ete { .. }).then_some(m.ms),
            }
        })
        .collect())
}

/// Single-estimand form of [`mc_truths`].
pub fn mc_truth(
    cfg: &DgpConfig,
    estimand: &Estimand,
    draws: u64,
    seed: u64,
) -> Result<OracleTruth> {
    Ok(mc_truths(cfg, std::slice::from_ref(estimand), draws, seed)?.remove(0))
}
