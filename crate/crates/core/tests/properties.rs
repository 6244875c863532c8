use std::collections::BTreeMap;

use num_rational::BigRational;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use selig::estimators::{estimate_one, Estimand, Method};
use selig::inference::resample_indices;
use selig::nuisance::{
    propensity_product, FittedNuisance, LearnerConfig, NuisanceSource, Requirements,
};
use selig::oracle::{
    enumerate_truth, verify_against, verify_recursions, ExactPopulation, TableNuisance,
};
use selig::panel::{PanelDataset, TreatmentHistory};
use selig::simlab::{generate_with, CovariateMode, DgpConfig, OutcomeKind};

fn bits(h: &[u8]) -> String {
    h.iter().map(|b| char::from(b'0' + b)).collect()
}

fn paths(k: usize, support: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..support).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

fn histories(k: usize) -> Vec<Vec<u8>> {
    TreatmentHistory::all(k)
        .map(|h| h.bits().to_vec())
        .collect()
}

fn key(z: &[u8], xs: &[usize]) -> String {
    let x: Vec<String> = xs.iter().map(usize::to_string).collect();
    format!("{};{}", bits(z), x.join(","))
}

/// Random finite population with a binary covariate and rational tables.
/// `draw(lo, hi)` supplies integers in `lo..=hi`.
fn random_population(
    horizon: usize,
    invariant: bool,
    mut draw: impl FnMut(i64, i64) -> i64,
) -> Value {
    let x_len = |t: usize| if invariant { 1 } else { t };
    let frac = |n: i64, d: i64| format!("{n}/{d}");
    let mut l = Vec::new();
    let l_tables = if invariant { 1 } else { horizon };
    for t in 1..=l_tables {
        let mut tab = BTreeMap::new();
        for z in histories(t - 1) {
            for xs in paths(t - 1, 2) {
                let a = draw(1, 7);
                let mut x0 = xs.clone();
                x0.push(0);
                let mut x1 = xs.clone();
                x1.push(1);
                tab.insert(key(&z, &x0), frac(a, 8));
                tab.insert(key(&z, &x1), frac(8 - a, 8));
            }
        }
        l.push(tab);
    }
    let table = |t: usize, z_len: usize, draw: &mut dyn FnMut() -> String| {
        let mut tab = BTreeMap::new();
        for z in histories(z_len) {
            for xs in paths(x_len(t), 2) {
                tab.insert(key(&z, &xs), draw());
            }
        }
        tab
    };
    let mut w = Vec::new();
    let mut mu = Vec::new();
    let mut p = Vec::new();
    for t in 1..=horizon {
        w.push(table(t, t - 1, &mut || frac(draw(1, 7), 8)));
        mu.push(table(t, t, &mut || frac(draw(-8, 8), 4)));
        if t >= 2 {
            p.push(table(t - 1, t - 1, &mut || frac(draw(1, 8), 8)));
        }
    }
    json!({
        "name": "random",
        "horizon": horizon,
        "covariate": "x",
        "time_invariant": invariant,
        "support": ["0", "1"],
        "l": l, "w": w, "p": p, "mu": mu,
    })
}

fn population(seed: u64, horizon: usize, invariant: bool) -> (Value, ExactPopulation<BigRational>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let value = random_population(horizon, invariant, |lo, hi| {
        rand::Rng::random_range(&mut rng, lo..=hi)
    });
    let pop =
        ExactPopulation::from_json(&value.to_string()).expect("generated population is valid");
    (value, pop)
}

fn all_estimands(horizon: usize) -> Vec<Estimand> {
    let mut specs = vec!["theta:all:0".to_string(), "theta:all:1".to_string()];
    for t in 1..=horizon {
        specs.push(format!("tau@{t}:*"));
    }
    specs
        .iter()
        .flat_map(|s| Estimand::parse_many(s).unwrap())
        .collect()
}

fn simulated(seed: u64, n: usize, delta: f64) -> PanelDataset {
    let cfg = DgpConfig {
        delta,
        outcome: OutcomeKind::Continuous,
        noise_sd: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_with(&cfg, CovariateMode::Correct, n, &mut rng)
        .unwrap()
        .0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identification_routes_agree(seed in any::<u64>(), horizon in 1usize..=3, invariant in any::<bool>()) {
        let (_, pop) = population(seed, horizon, invariant);
        for e in all_estimands(horizon) {
            prop_assert!(enumerate_truth(&pop, &e).is_ok(), "{e}");
        }
        let report = verify_recursions(&pop);
        prop_assert!(report.passed(), "{:?}", report.failures());
    }

    #[test]
    fn bias_formula_holds_for_any_wrong_model(seed in any::<u64>(), other in any::<u64>(), horizon in 1usize..=3) {
        let (law_json, law) = population(seed, horizon, false);
        let (model_json, _) = population(other, horizon, false);
        // Wrong nuisances on the law's covariate distribution.
        let mut mixed = model_json.clone();
        mixed["l"] = law_json["l"].clone();
        let model = ExactPopulation::<BigRational>::from_json(&mixed.to_string()).unwrap();
        let report = verify_against(&law, &model);
        prop_assert_eq!(report.failed("bias-formula"), 0);
    }

    #[test]
    fn dr_survives_either_wrong_family(seed in any::<u64>(), other in any::<u64>(), wrong_w in any::<bool>()) {
        let horizon = 2;
        let (law_json, law) = population(seed, horizon, true);
        let (model_json, _) = population(other, horizon, true);
        let mut mixed = law_json.clone();
        if wrong_w {
            mixed["w"] = model_json["w"].clone();
        } else {
            mixed["mu"] = model_json["mu"].clone();
            mixed["p"] = model_json["p"].clone();
        }
        let model = ExactPopulation::<BigRational>::from_json(&mixed.to_string()).unwrap();
        let data = law.expand().unwrap();
        let source = TableNuisance::new(model.to_f64());
        for e in all_estimands(horizon) {
            let truth = enumerate_truth(&law, &e).unwrap().value;
            let dr = estimate_one(&data, &source, &e, Method::Dr).unwrap().estimate;
            prop_assert!((dr - truth).abs() < 1e-9, "{e}: {dr} vs {truth}");
        }
    }

    #[test]
    fn risk_sets_partition_the_eligible(seed in 0u64..10_000, n in 1usize..150) {
        let data = simulated(seed, n, 0.0);
        for t in 1..=data.horizon() {
            let mut seen = vec![0usize; data.len()];
            for h in TreatmentHistory::all(t - 1) {
                for i in data.risk_set(t, &h) {
                    seen[i] += 1;
                }
            }
            for (i, u) in data.units().iter().enumerate() {
                prop_assert_eq!(seen[i], usize::from(u.eligible(t)));
            }
        }
    }

    #[test]
    fn csv_round_trip_is_the_identity(seed in 0u64..10_000, n in 1usize..60, feedback in any::<bool>()) {
        let simulated = simulated(seed, n, if feedback { 0.5 } else { 0.0 });
        let mut raw = Vec::new();
        simulated.write_csv(&mut raw).unwrap();
        let data = PanelDataset::read_csv(raw.as_slice(), simulated.schema()).unwrap();
        prop_assert_eq!(data.len(), simulated.len());
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = PanelDataset::read_csv(buf.as_slice(), data.schema()).unwrap();
        prop_assert_eq!(&back, &data);
        let mut again = Vec::new();
        back.write_csv(&mut again).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn propensity_product_extends_by_one_factor(seed in 0u64..2_000) {
        let data = simulated(seed, 300, 0.0);
        let req = Requirements {
            propensity_through: 3,
            ..Requirements::default()
        };
        let fit = FittedNuisance::fit(&data, &LearnerConfig::default(), &req).unwrap();
        for (i, u) in data.units().iter().enumerate() {
            let z: Vec<u8> = u.periods.iter().map(|p| p.treatment).collect();
            for t in 1..=z.len() {
                let w = fit.propensity(i, u, &z[..t]).unwrap();
                let prev = propensity_product(&fit, i, u, &z[..t - 1]).unwrap();
                let cur = propensity_product(&fit, i, u, &z[..t]).unwrap();
                prop_assert!(w > 0.0 && w < 1.0);
                prop_assert!(cur > 0.0 && cur <= 1.0);
                prop_assert_eq!(cur, prev * w);
            }
        }
    }

    #[test]
    fn bootstrap_resamples_whole_units(seed in any::<u64>(), b in 0u64..1000, n in 1usize..80) {
        let data = simulated(seed % 1000, n, 0.5);
        let idx = resample_indices(data.len(), seed, b);
        let boot = data.resample(&idx);
        prop_assert_eq!(boot.len(), data.len());
        for (u, &i) in boot.units().iter().zip(&idx) {
            let src = &data.units()[i];
            prop_assert_eq!(&u.periods, &src.periods);
            prop_assert_eq!(&u.baseline, &src.baseline);
        }
    }
}
