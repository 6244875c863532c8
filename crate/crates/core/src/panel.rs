//! Long-format longitudinal panels with selective eligibility.
//!
//! A unit is eligible for periods `1..=k` and for none after (eligibility is
//! monotone and every unit is eligible at `t = 1`). Treatment, outcome and
//! time-varying covariates exist exactly for the eligible periods, so a unit
//! is stored as its baseline covariates plus one [`Period`] per eligible time.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary treatment sequence `(z_1, ..., z_t)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TreatmentHistory(Vec<u8>);

impl TreatmentHistory {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::Parse(format!("treatment bit {b} is not binary")));
        }
        Ok(Self(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    /// The first `k` treatments. Panics if `k > len`.
    pub fn prefix(&self, k: usize) -> TreatmentHistory {
        TreatmentHistory(self.0[..k].to_vec())
    }

    /// The history extended by one more treatment.
    pub fn then(&self, z: u8) -> TreatmentHistory {
        debug_assert!(z <= 1);
        let mut bits = self.0.clone();
        bits.push(z);
        TreatmentHistory(bits)
    }

    pub fn last(&self) -> Option<u8> {
        self.0.last().copied()
    }

    /// Position of this history among all histories of the same length,
    /// reading the bits as a big-endian binary number.
    pub fn index(&self) -> usize {
        self.0
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | b as usize)
    }

    /// All `2^len` histories of the given length in lexicographic order.
    pub fn all(len: usize) -> impl Iterator<Item = TreatmentHistory> {
        (0..1usize << len).map(move |code| {
            TreatmentHistory(
                (0..len)
                    .map(|j| ((code >> (len - 1 - j)) & 1) as u8)
                    .collect(),
            )
        })
    }
}

impl fmt::Display for TreatmentHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for TreatmentHistory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Parse(format!(
                    "treatment history '{s}' contains '{other}'"
                ))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(TreatmentHistory)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateClass {
    Invariant,
    Varying,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateColumn {
    pub name: String,
    pub class: CovariateClass,
}

/// Covariate columns and their invariance class. This is also the on-disk
/// schema sidecar format (`{"covariates": [{"name": .., "class": ..}]}`).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub covariates: Vec<CovariateColumn>,
}

impl CovariateSchema {
    pub fn new(invariant: &[&str], varying: &[&str]) -> Self {
        let col = |name: &&str, class| CovariateColumn {
            name: name.to_string(),
            class,
        };
        Self {
            covariates: invariant
                .iter()
                .map(|n| col(n, CovariateClass::Invariant))
                .chain(varying.iter().map(|n| col(n, CovariateClass::Varying)))
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: CovariateSchema =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let mut seen = std::collections::HashSet::new();
        for c in &schema.covariates {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!(
                    "covariate '{}' listed twice",
                    c.name
                )));
            }
            if RESERVED.contains(&c.name.as_str()) {
                return Err(Error::Schema(format!("'{}' is a reserved column", c.name)));
            }
        }
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// Names of the time-invariant columns, in schema order.
    pub fn invariant(&self) -> Vec<&str> {
        self.names(CovariateClass::Invariant)
    }

    /// Names of the time-varying columns, in schema order.
    pub fn varying(&self) -> Vec<&str> {
        self.names(CovariateClass::Varying)
    }

    fn names(&self, class: CovariateClass) -> Vec<&str> {
        self.covariates
            .iter()
            .filter(|c| c.class == class)
            .map(|c| c.name.as_str())
            .collect()
    }
}

const RESERVED: [&str; 5] = ["unit_id", "time", "eligible", "treatment", "outcome"];

/// One eligible period of a unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Period {
    pub treatment: u8,
    pub outcome: f64,
    /// Time-varying covariates, in schema order.
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub id: String,
    /// Time-invariant covariates, in schema order.
    pub baseline: Vec<f64>,
    /// Eligible periods `1..=periods.len()`.
    pub periods: Vec<Period>,
}

impl UnitRecord {
    /// Number of periods this unit is eligible for.
    pub fn eligible_through(&self) -> usize {
        self.periods.len()
    }

    /// `S_t`; `t` is 1-based.
    pub fn eligible(&self, t: usize) -> bool {
        t >= 1 && t <= self.periods.len()
    }

    pub fn treatment(&self, t: usize) -> Option<u8> {
        self.period(t).map(|p| p.treatment)
    }

    pub fn outcome(&self, t: usize) -> Option<f64> {
        self.period(t).map(|p| p.outcome)
    }

    pub fn period(&self, t: usize) -> Option<&Period> {
        if t == 0 {
            None
        } else {
            self.periods.get(t - 1)
        }
    }

    /// Observed treatment history through `t` (requires eligibility at `t`).
    pub fn history(&self, t: usize) -> Option<TreatmentHistory> {
        (t <= self.periods.len())
            .then(|| TreatmentHistory(self.periods[..t].iter().map(|p| p.treatment).collect()))
    }

    /// `1{Z̄_k = z̄_k}` for `k = history.len()`; false when the unit was not
    /// eligible through `k`.
    pub fn follows(&self, history: &TreatmentHistory) -> bool {
        history.len() <= self.periods.len()
            && self
                .periods
                .iter()
                .zip(history.bits())
                .all(|(p, &z)| p.treatment == z)
    }
}

/// A validated longitudinal dataset. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    schema: CovariateSchema,
    horizon: usize,
    units: Vec<UnitRecord>,
}

impl PanelDataset {
    /// Builds a dataset from already-normalized unit records.
    pub fn new(schema: CovariateSchema, units: Vec<UnitRecord>) -> Result<Self> {
        let n_inv = schema.invariant().len();
        let n_var = schema.varying().len();
        let mut ids = std::collections::HashSet::new();
        for u in &units {
            if !ids.insert(u.id.as_str()) {
                return Err(Error::DuplicateKey {
                    unit: u.id.clone(),
                    time: 1,
                });
            }
            if u.periods.is_empty() {
                return Err(Error::EligibilityViolation {
                    unit: u.id.clone(),
                    time: 1,
                    message: "every unit must be eligible at t = 1".into(),
                });
            }
            if u.baseline.len() != n_inv || u.baseline.iter().any(|v| !v.is_finite()) {
                return Err(Error::PresenceViolation {
                    unit: u.id.clone(),
                    time: 1,
                    message: format!("expected {n_inv} finite time-invariant covariates"),
                });
            }
            for (k, p) in u.periods.iter().enumerate() {
                if p.treatment > 1 {
                    return Err(Error::MalformedRow {
                        row: k + 1,
                        message: format!("unit {} has non-binary treatment", u.id),
                    });
                }
                if !p.outcome.is_finite()
                    || p.covariates.len() != n_var
                    || p.covariates.iter().any(|v| !v.is_finite())
                {
                    return Err(Error::PresenceViolation {
                        unit: u.id.clone(),
                        time: k + 1,
                        message: format!(
                            "expected a finite outcome and {n_var} finite time-varying covariates"
                        ),
                    });
                }
            }
        }
        if units.is_empty() {
            return Err(Error::InvalidConfig("dataset has no units".into()));
        }
        Ok(Self::from_parts(schema, units))
    }

    fn from_parts(schema: CovariateSchema, units: Vec<UnitRecord>) -> Self {
        let horizon = units.iter().map(|u| u.periods.len()).max().unwrap_or(0);
        Self {
            schema,
            horizon,
            units,
        }
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    /// `T`: the last period at which any unit is eligible.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn units(&self) -> &[UnitRecord] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// True when every covariate is time-invariant.
    pub fn time_invariant_only(&self) -> bool {
        self.schema.varying().is_empty()
    }

    /// True when every observed outcome is 0 or 1.
    pub fn binary_outcomes(&self) -> bool {
        self.units
            .iter()
            .flat_map(|u| u.periods.iter())
            .all(|p| p.outcome == 0.0 || p.outcome == 1.0)
    }

    /// Units eligible at `t` whose observed history through `t - 1` equals
    /// `history`. For `t = 1` this is every unit.
    pub fn risk_set(&self, t: usize, history: &TreatmentHistory) -> Vec<usize> {
        debug_assert_eq!(history.len() + 1, t.max(1));
        self.units
            .iter()
            .enumerate()
            .filter(|(_, u)| u.eligible(t) && u.follows(history))
            .map(|(i, _)| i)
            .collect()
    }

    /// Dataset made of the given units (repeats allowed). Repeated units get
    /// a `#k` suffix so ids stay unique.
    pub fn resample(&self, indices: &[usize]) -> PanelDataset {
        let units = indices
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let mut u = self.units[i].clone();
                u.id = format!("{}#{k}", u.id);
                u
            })
            .collect();
        Self::from_parts(self.schema.clone(), units)
    }

    /// Dataset made of a subset of units, ids unchanged.
    pub fn subset(&self, indices: &[usize]) -> PanelDataset {
        let units = indices.iter().map(|&i| self.units[i].clone()).collect();
        Self::from_parts(self.schema.clone(), units)
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &CovariateSchema) -> Result<Self> {
        let path = path.as_ref();
        let file =
            std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read_csv(file, schema)
    }

    pub fn read_csv<R: Read>(reader: R, schema: &CovariateSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::MalformedRow {
                row: 1,
                message: e.to_string(),
            })?
            .clone();
        let names: Vec<&str> = header.iter().collect();
        if names.len() < RESERVED.len() || names[..RESERVED.len()] != RESERVED {
            return Err(Error::Schema(format!(
                "header must start with {}",
                RESERVED.join(",")
            )));
        }
        // Map schema columns to CSV positions.
        let csv_covs = &names[RESERVED.len()..];
        for name in csv_covs {
            if !schema.covariates.iter().any(|c| c.name == *name) {
                return Err(Error::Schema(format!(
                    "column '{name}' is not declared in the schema"
                )));
            }
        }
        let position = |name: &str| -> Result<usize> {
            csv_covs
                .iter()
                .position(|c| *c == name)
                .map(|p| p + RESERVED.len())
                .ok_or_else(|| Error::Schema(format!("schema column '{name}' missing from data")))
        };
        let inv_pos: Vec<(String, usize)> = schema
            .invariant()
            .into_iter()
            .map(|n| position(n).map(|p| (n.to_string(), p)))
            .collect::<Result<_>>()?;
        let var_pos: Vec<(String, usize)> = schema
            .varying()
            .into_iter()
            .map(|n| position(n).map(|p| (n.to_string(), p)))
            .collect::<Result<_>>()?;

        let mut by_unit: BTreeMap<String, Vec<RawRow>> = BTreeMap::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::MalformedRow {
                row: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
            let raw = RawRow::parse(&record, row, &inv_pos, &var_pos)?;
            by_unit.entry(raw.unit.clone()).or_default().push(raw);
        }

        let mut units = Vec::with_capacity(by_unit.len());
        for (id, mut rows) in by_unit {
            rows.sort_by_key(|r| r.time);
            units.push(assemble_unit(id, rows, &inv_pos, &var_pos)?);
        }
        if units.is_empty() {
            return Err(Error::MalformedRow {
                row: 2,
                message: "no data rows".into(),
            });
        }
        Ok(Self::from_parts(schema.clone(), units))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.write_csv(file)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Writes the long format: one row per eligible period, schema columns
    /// in schema order (invariant first, then varying).
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let inv = self.schema.invariant();
        let var = self.schema.varying();
        let mut header: Vec<&str> = RESERVED.to_vec();
        header.extend(&inv);
        header.extend(&var);
        w.write_record(&header)?;
        for u in &self.units {
            for (k, p) in u.periods.iter().enumerate() {
                let mut rec = vec![
                    u.id.clone(),
                    (k + 1).to_string(),
                    "1".to_string(),
                    p.treatment.to_string(),
                    p.outcome.to_string(),
                ];
                rec.extend(u.baseline.iter().map(|v| v.to_string()));
                rec.extend(p.covariates.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()
    }
}

struct RawRow {
    row: usize,
    unit: String,
    time: usize,
    eligible: bool,
    treatment: Option<u8>,
    outcome: Option<f64>,
    invariant: Vec<Option<f64>>,
    varying: Vec<Option<f64>>,
}

impl RawRow {
    fn parse(
        rec: &csv::StringRecord,
        row: usize,
        inv_pos: &[(String, usize)],
        var_pos: &[(String, usize)],
    ) -> Result<Self> {
        let bad = |message: String| Error::MalformedRow { row, message };
        let field = |i: usize| rec.get(i).unwrap_or("");
        let unit = field(0).to_string();
        if unit.is_empty() {
            return Err(bad("empty unit_id".into()));
        }
        let time: usize = field(1)
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| bad(format!("time '{}' is not a positive integer", field(1))))?;
        let eligible = match field(2) {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("eligible '{other}' is not 0 or 1"))),
        };
        let treatment = match field(3) {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => return Err(bad(format!("treatment '{other}' is not 0 or 1"))),
        };
        let number = |name: &str, s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| bad(format!("{name} '{s}' is not a finite number")))
        };
        let outcome = number("outcome", field(4))?;
        let invariant = inv_pos
            .iter()
            .map(|(n, p)| number(n, field(*p)))
            .collect::<Result<_>>()?;
        let varying = var_pos
            .iter()
            .map(|(n, p)| number(n, field(*p)))
            .collect::<Result<_>>()?;
        Ok(Self {
            row,
            unit,
            time,
            eligible,
            treatment,
            outcome,
            invariant,
            varying,
        })
    }
}

fn assemble_unit(
    id: String,
    rows: Vec<RawRow>,
    inv_pos: &[(String, usize)],
    var_pos: &[(String, usize)],
) -> Result<UnitRecord> {
    for pair in rows.windows(2) {
        if pair[0].time == pair[1].time {
            return Err(Error::DuplicateKey {
                unit: id,
                time: pair[0].time,
            });
        }
    }
    let eligibility_err = |time: usize, message: &str| Error::EligibilityViolation {
        unit: id.clone(),
        time,
        message: message.to_string(),
    };
    let presence_err = |time: usize, message: String| Error::PresenceViolation {
        unit: id.clone(),
        time,
        message,
    };
    match rows.first() {
        Some(r) if r.time == 1 && r.eligible => {}
        _ => return Err(eligibility_err(1, "missing eligible row at t = 1")),
    }

    let mut baseline: Option<Vec<f64>> = None;
    let mut periods = Vec::new();
    let mut dropped_out = false;
    for r in &rows {
        if !r.eligible {
            dropped_out = true;
            if r.treatment.is_some() || r.outcome.is_some() {
                return Err(presence_err(
                    r.time,
                    "treatment/outcome present while ineligible".into(),
                ));
            }
            if let Some((name, _)) = var_pos
                .iter()
                .zip(&r.varying)
                .find_map(|(c, v)| v.map(|_| c))
            {
                return Err(presence_err(
                    r.time,
                    format!("time-varying covariate '{name}' present while ineligible"),
                ));
            }
            continue;
        }
        if dropped_out || r.time != periods.len() + 1 {
            return Err(eligibility_err(
                r.time,
                "eligible after an ineligible (or missing) period",
            ));
        }
        let treatment = r
            .treatment
            .ok_or_else(|| presence_err(r.time, "treatment missing while eligible".into()))?;
        let outcome = r
            .outcome
            .ok_or_else(|| presence_err(r.time, "outcome missing while eligible".into()))?;
        let missing = |cols: &[(String, usize)], vals: &[Option<f64>]| {
            cols.iter()
                .zip(vals)
                .find(|(_, v)| v.is_none())
                .map(|((n, _), _)| n.clone())
        };
        if let Some(name) = missing(inv_pos, &r.invariant).or_else(|| missing(var_pos, &r.varying))
        {
            return Err(presence_err(r.time, format!("covariate '{name}' missing")));
        }
        let inv: Vec<f64> = r.invariant.iter().map(|v| v.unwrap()).collect();
        match &baseline {
            None => baseline = Some(inv),
            Some(b) if *b != inv => {
                return Err(Error::MalformedRow {
                    row: r.row,
                    message: format!("time-invariant covariates change within unit {id}"),
                })
            }
            Some(_) => {}
        }
        periods.push(Period {
            treatment,
            outcome,
            covariates: r.varying.iter().map(|v| v.unwrap()).collect(),
        });
    }
    Ok(UnitRecord {
        id,
        baseline: baseline.unwrap_or_default(),
        periods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CovariateSchema {
        CovariateSchema::new(&["x"], &[])
    }

    fn load(text: &str) -> Result<PanelDataset> {
        PanelDataset::read_csv(text.as_bytes(), &schema())
    }

    #[test]
    fn history_parse_and_enumerate() {
        let h: TreatmentHistory = "101".parse().unwrap();
        assert_eq!(h.bits(), &[1, 0, 1]);
        assert_eq!(h.to_string(), "101");
        assert_eq!(h.index(), 5);
        assert_eq!(h.prefix(2).to_string(), "10");
        let all: Vec<String> = TreatmentHistory::all(2).map(|h| h.to_string()).collect();
        assert_eq!(all, ["00", "01", "10", "11"]);
        assert_eq!(TreatmentHistory::all(0).count(), 1);
        assert!("12".parse::<TreatmentHistory>().is_err());
    }

    #[test]
    fn loads_well_formed_two_period_file() {
        let data = load(
            "unit_id,time,eligible,treatment,outcome,x\n\
             a,1,1,1,0.5,2\n\
             a,2,1,0,1.5,2\n\
             b,1,1,0,0.0,3\n\
             b,2,0,,,\n",
        )
        .unwrap();
        assert_eq!(data.horizon(), 2);
        assert_eq!(data.len(), 2);
        assert_eq!(data.units()[1].eligible_through(), 1);
        assert!(data.time_invariant_only());
    }

    #[test]
    fn non_monotone_eligibility_is_rejected() {
        let err = load(
            "unit_id,time,eligible,treatment,outcome,x\n\
             a,1,1,1,0.5,2\n\
             a,2,0,,,\n\
             a,3,1,0,1.0,2\n",
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::EligibilityViolation { time: 3, .. }),
            "{err}"
        );
    }

    #[test]
    fn missing_first_period_is_rejected() {
        let err = load(
            "unit_id,time,eligible,treatment,outcome,x\n\
             a,2,1,1,0.5,2\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::EligibilityViolation { time: 1, .. }));
    }

    #[test]
    fn empty_treatment_while_eligible_is_rejected() {
        let err = load(
            "unit_id,time,eligible,treatment,outcome,x\n\
             a,1,1,1,0.5,2\n\
             a,2,1,,1.0,2\n",
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::PresenceViolation { time: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn outcome_while_ineligible_is_rejected() {
        let err = load(
            "unit_id,time,eligible,treatment,outcome,x\n\
             a,1,1,1,0.5,2\n\
             a,2,0,,1.0,\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::PresenceViolation { .. }));
    }

    #[test]
    fn duplicate_unit_time_is_rejected() {
        let err = load(
            "unit_id,time,eligible,treatment,outcome,x\n\
             a,1,1,1,0.5,2\n\
             a,1,1,0,0.5,2\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { time: 1, .. }));
    }

    #[test]
    fn malformed_rows_cite_the_line() {
        let err = load(
            "unit_id,time,eligible,treatment,outcome,x\n\
             a,1,1,1,0.5,2\n\
             b,1,2,1,0.5,2\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 3, .. }), "{err}");
        let err = load(
            "unit_id,time,eligible,treatment,outcome,x\n\
             a,1,1,1,abc,2\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }));
    }

    #[test]
    fn missing_covariate_is_a_hard_error() {
        let err = load(
            "unit_id,time,eligible,treatment,outcome,x\n\
             a,1,1,1,0.5,\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::PresenceViolation { .. }));
    }

    #[test]
    fn undeclared_column_is_a_schema_error() {
        let err = PanelDataset::read_csv(
            "unit_id,time,eligible,treatment,outcome,x,w\na,1,1,1,0.5,1,2\n".as_bytes(),
            &schema(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn risk_set_filters_on_history_and_eligibility() {
        let data = load(
            "unit_id,time,eligible,treatment,outcome,x\n\
             a,1,1,1,0,0\na,2,1,0,0,0\n\
             b,1,1,1,0,0\nb,2,1,1,0,0\n\
             c,1,1,1,0,0\nc,2,1,1,0,0\n\
             d,1,1,1,0,0\n\
             e,1,1,0,0,0\ne,2,1,0,0,0\n",
        )
        .unwrap();
        assert_eq!(
            data.risk_set(1, &TreatmentHistory::empty()),
            vec![0, 1, 2, 3, 4]
        );
        assert_eq!(data.risk_set(2, &"1".parse().unwrap()), vec![0, 1, 2]);
        assert_eq!(data.risk_set(2, &"0".parse().unwrap()), vec![4]);
    }

    #[test]
    fn schema_json_round_trip() {
        let s = CovariateSchema::new(&["x1", "x2"], &["ylag"]);
        assert_eq!(CovariateSchema::from_json(&s.to_json()).unwrap(), s);
        assert!(CovariateSchema::from_json(
            r#"{"covariates":[{"name":"time","class":"varying"}]}"#
        )
        .is_err());
    }
}
