use num_rational::BigRational;
use num_traits::ToPrimitive;

use selig::estimators::{estimate_one, requirements, Estimand, Method};
use selig::learners::FeatureMode;
use selig::nuisance::{FittedNuisance, LearnerConfig, NuisanceSource};
use selig::oracle::{
    dr_bias_formula, dr_bias_formula_d, enumerate_truth, verify_against, ExactPopulation, Scalar,
    Table, TableNuisance, TruthMethod,
};
use selig::panel::TreatmentHistory;

fn q(s: &str) -> BigRational {
    <BigRational as Scalar>::parse(s).unwrap()
}

fn estimands(horizon: usize) -> Vec<Estimand> {
    let mut specs = vec![
        "theta:all:0".to_string(),
        "theta:all:1".to_string(),
        "theta:table:=0.3;1=0.8;0=0.4".to_string(),
    ];
    for t in 1..=horizon {
        specs.push(format!("tau@{t}:*"));
    }
    specs
        .iter()
        .flat_map(|s| Estimand::parse_many(s).unwrap())
        .collect()
}

#[test]
fn d1_truths_are_exact_fractions() {
    let d1 = ExactPopulation::d1();
    let truth = |s: &str| enumerate_truth(&d1, &Estimand::parse(s).unwrap()).unwrap();
    let t20 = truth("tau@2:0");
    assert_eq!(t20.exact.as_deref(), Some("8/5"));
    assert_eq!(t20.method, TruthMethod::Exact);
    assert_eq!(t20.denominator, Some(0.625));
    assert_eq!(truth("tau@2:1").exact.as_deref(), Some("11/7"));
    assert_eq!(truth("theta:all:1").exact.as_deref(), Some("15/4"));
    assert!((truth("tau@2:1").value - 11.0 / 7.0).abs() < 1e-15);
}

#[test]
fn float_and_rational_truths_agree() {
    for pop in [ExactPopulation::d1(), ExactPopulation::d2()] {
        let float = pop.to_f64();
        for e in estimands(pop.horizon()) {
            let a = enumerate_truth(&pop, &e).unwrap().value;
            let b = enumerate_truth(&float, &e).unwrap().value;
            assert!((a - b).abs() < 1e-12, "{e}: {a} vs {b}");
        }
    }
}

#[test]
fn estimators_coincide_with_exact_nuisances() {
    for pop in [ExactPopulation::d1(), ExactPopulation::d2()] {
        let data = pop.expand().unwrap();
        let source = TableNuisance::new(pop.to_f64());
        for e in estimands(pop.horizon()) {
            let truth = enumerate_truth(&pop, &e).unwrap().value;
            for m in Method::ALL {
                let got = estimate_one(&data, &source, &e, m).unwrap();
                assert!(
                    (got.estimate - truth).abs() < 1e-10,
                    "{} {e} {m}: {} vs {truth}",
                    pop.name(),
                    got.estimate
                );
                if m == Method::Dr {
                    let eif = got.eif.unwrap();
                    let mean = eif.iter().sum::<f64>() / eif.len() as f64;
                    assert!(mean.abs() < 1e-10, "{e}: EIF mean {mean}");
                }
            }
        }
    }
}

fn wrong_tables() -> ExactPopulation<BigRational> {
    ExactPopulation::d1()
        .with_entry(Table::Mu, 2, "01;1", q("3"))
        .unwrap()
        .with_entry(Table::Mu, 1, "0;0", q("-1/2"))
        .unwrap()
        .with_entry(Table::W, 1, ";1", q("1/3"))
        .unwrap()
        .with_entry(Table::W, 2, "0;0", q("2/3"))
        .unwrap()
        .with_entry(Table::P, 2, "0;1", q("1/2"))
        .unwrap()
}

#[test]
fn dr_deviation_matches_the_bias_formula() {
    let law = ExactPopulation::d1();
    let model = wrong_tables();
    let data = law.expand().unwrap();
    let source = TableNuisance::new(model.to_f64());
    for prev in ["", "0", "1"] {
        let t = prev.len() + 1;
        let e = Estimand::ete(t, prev).unwrap();
        let got = estimate_one(&data, &source, &e, Method::Dr).unwrap();
        for (h, n_hat) in &got.numerators {
            let truth = law.regression_n(h.bits()).to_f64().unwrap();
            let bias = dr_bias_formula(&law, &model, h.bits()).to_f64().unwrap();
            assert!(
                (n_hat - truth - bias).abs() < 1e-10,
                "N({h}): {n_hat} - {truth} vs {bias}"
            );
        }
        let prev_h: TreatmentHistory = prev.parse().unwrap();
        let d_truth = law.regression_d(prev_h.bits()).to_f64().unwrap();
        let d_bias = dr_bias_formula_d(&law, &model, prev_h.bits())
            .to_f64()
            .unwrap();
        let d_hat = got.denominator.unwrap();
        assert!((d_hat - d_truth - d_bias).abs() < 1e-10);
    }
    let report = verify_against(&law, &model);
    assert_eq!(report.failed("bias-formula"), 0);
    assert!(
        report.failed("eif-mean") > 0,
        "wrong tables must bias the DR mean"
    );
}

#[test]
fn single_correct_family_keeps_dr_exact() {
    let law = ExactPopulation::d1();
    let data = law.expand().unwrap();
    let bad_outcome = law
        .with_entry(Table::Mu, 2, "11;0", q("7"))
        .unwrap()
        .with_entry(Table::P, 2, "1;0", q("1/5"))
        .unwrap();
    let bad_treatment = law.with_entry(Table::W, 2, "1;1", q("1/5")).unwrap();
    let e = Estimand::ete(2, "1").unwrap();
    let truth = enumerate_truth(&law, &e).unwrap().value;
    for (model, broken) in [(bad_outcome, Method::Reg), (bad_treatment, Method::Ipw)] {
        let source = TableNuisance::new(model.to_f64());
        let dr = estimate_one(&data, &source, &e, Method::Dr)
            .unwrap()
            .estimate;
        let single = estimate_one(&data, &source, &e, broken).unwrap().estimate;
        assert!((dr - truth).abs() < 1e-10, "{dr} vs {truth}");
        assert!(
            (single - truth).abs() > 1e-3,
            "{broken} unexpectedly unbiased"
        );
    }
}

#[test]
fn saturated_fits_reproduce_the_exact_regressions() {
    for pop in [ExactPopulation::d1(), ExactPopulation::d2()] {
        let data = pop.expand().unwrap();
        let exact = pop.to_f64();
        let table = TableNuisance::new(exact.clone());
        let es = estimands(pop.horizon());
        let req = requirements(&es, &[Method::Dr], pop.horizon()).unwrap();
        let cfg = LearnerConfig {
            features: FeatureMode::Saturated,
            ..LearnerConfig::default()
        };
        let fit = FittedNuisance::fit(&data, &cfg, &req).unwrap();
        for (i, unit) in data.units().iter().enumerate() {
            for target in &req.ys_targets {
                for k in 1..=target.len().min(unit.eligible_through()) {
                    if unit
                        .history(k - 1)
                        .is_some_and(|h| h.bits() == &target.bits()[..k - 1])
                    {
                        let a = fit.m_ys(i, unit, target.bits(), k).unwrap();
                        let b = table.m_ys(i, unit, target.bits(), k).unwrap();
                        assert!(
                            (a - b).abs() < 1e-10,
                            "{} m_ys({target}, k={k}): {a} vs {b}",
                            pop.name()
                        );
                    }
                }
            }
            for target in &req.s_targets {
                for k in 1..=target.len().min(unit.eligible_through()) {
                    if unit
                        .history(k - 1)
                        .is_some_and(|h| h.bits() == &target.bits()[..k - 1])
                    {
                        let a = fit.m_s(i, unit, target.bits(), k).unwrap();
                        let b = table.m_s(i, unit, target.bits(), k).unwrap();
                        assert!(
                            (a - b).abs() < 1e-10,
                            "{} m_s({target}, k={k}): {a} vs {b}",
                            pop.name()
                        );
                    }
                }
            }
            let bits: Vec<u8> = unit.periods.iter().map(|p| p.treatment).collect();
            let a = fit.propensity(i, unit, &bits).unwrap();
            let b = table.propensity(i, unit, &bits).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn population_files_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d1.json");
    std::fs::write(&path, include_str!("../fixtures/d1.json")).unwrap();
    let loaded = ExactPopulation::<BigRational>::builtin_or_load(path.to_str().unwrap()).unwrap();
    let e = Estimand::parse("tau@2:0").unwrap();
    assert_eq!(
        enumerate_truth(&loaded, &e).unwrap().exact.as_deref(),
        Some("8/5")
    );
    assert!(ExactPopulation::<BigRational>::builtin_or_load("/nonexistent/pop.json").is_err());
}
