//! Unit-level nonparametric bootstrap. Every replicate resamples whole
//! trajectories and refits the nuisance models from scratch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate, estimate_one, requirements, Estimand, EstimateReport, Interval, IntervalKind, Method,
};
use crate::nuisance::{FittedNuisance, LearnerConfig};
use crate::panel::PanelDataset;

/// Largest tolerated share of failed replicates.
pub const MAX_FAILED_SHARE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub kind: IntervalKind,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self {
            replicates: 500,
            level: 0.95,
            seed: 0,
            kind: IntervalKind::Percentile,
        }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidConfig(format!(
                "bootstrap needs at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "confidence level {} outside (0, 1)",
                self.level
            )));
        }
        Ok(())
    }
}

/// Type-7 sample quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Resampling indices for replicate `b`: stream `b` of `seed`.
pub fn resample_indices(n: usize, seed: u64, b: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Estimates of one replicate in estimand-major order, `None` where the
/// replicate failed.
fn replicate(
    data: &PanelDataset,
    config: &LearnerConfig,
    estimands: &[Estimand],
    methods: &[Method],
    seed: u64,
    b: u64,
) -> Vec<Option<f64>> {
    let boot = data.resample(&resample_indices(data.len(), seed, b));
    let slots = estimands.len() * methods.len();
    let Ok(req) = requirements(estimands, methods, data.horizon()) else {
        return vec![None; slots];
    };
    let Ok(source) = FittedNuisance::fit(&boot, config, &req) else {
        return vec![None; slots];
    };
    estimands
        .iter()
        .flat_map(|e| methods.iter().map(move |&m| (e, m)))
        .map(|(e, m)| {
            estimate_one(&boot, &source, e, m)
                .ok()
                .map(|r| r.estimate)
                .filter(|v| v.is_finite())
        })
        .collect()
}

/// Point estimates with bootstrap intervals, in estimand-major order.
pub fn bootstrap(
    data: &PanelDataset,
    config: &LearnerConfig,
    estimands: &[Estimand],
    methods: &[Method],
    spec: &BootstrapSpec,
) -> Result<Vec<EstimateReport>> {
    spec.validate()?;
    let mut reports = estimate(data, config, estimands, methods)?;
    let draws: Vec<Vec<Option<f64>>> = (0..spec.replicates as u64)
        .into_par_iter()
        .map(|b| replicate(data, config, estimands, methods, spec.seed, b))
        .collect();
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + spec.level / 2.0);
    let alpha = 1.0 - spec.level;
    for (slot, report) in reports.iter_mut().enumerate() {
        let mut vals: Vec<f64> = draws.iter().filter_map(|d| d[slot]).collect();
        let failed = spec.replicates - vals.len();
        if failed as f64 > MAX_FAILED_SHARE * spec.replicates as f64 || vals.len() < 2 {
            return Err(Error::TooManyFailedReplicates {
                failed,
                total: spec.replicates,
            });
        }
        vals.sort_by(f64::total_cmp);
        let (low, high) = match spec.kind {
            IntervalKind::Percentile => (
                quantile(&vals, alpha / 2.0),
                quantile(&vals, 1.0 - alpha / 2.0),
            ),
            IntervalKind::Normal => {
                let k = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / k;
                let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
                (report.estimate - z * sd, report.estimate + z * sd)
            }
        };
        report.interval = Some(Interval {
            low,
            high,
            level: spec.level,
            kind: spec.kind,
        });
        report.diagnostics.failed_reps = failed;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::tests::discrete_panel;

    #[test]
    fn type7_quantiles() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&x, 0.0), 1.0);
        assert_eq!(quantile(&x, 1.0), 4.0);
        assert!((quantile(&x, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&x, 0.1) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        let bad = BootstrapSpec {
            replicates: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = BootstrapSpec {
            level: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn streams_are_per_replicate() {
        assert_eq!(resample_indices(50, 3, 7), resample_indices(50, 3, 7));
        assert_ne!(resample_indices(50, 3, 7), resample_indices(50, 3, 8));
    }

    #[test]
    fn intervals_cover_the_estimate_and_are_reproducible() {
        let data = discrete_panel(11, 400, 2, false);
        let estimands = vec![
            Estimand::ete(1, "").unwrap(),
            Estimand::ete(2, "1").unwrap(),
        ];
        let spec = BootstrapSpec {
            replicates: 40,
            seed: 5,
            ..Default::default()
        };
        let cfg = LearnerConfig::default();
        let a = bootstrap(&data, &cfg, &estimands, &[Method::Dr], &spec).unwrap();
        let b = bootstrap(&data, &cfg, &estimands, &[Method::Dr], &spec).unwrap();
        assert_eq!(a, b);
        for r in &a {
            let ci = r.interval.unwrap();
            assert!(ci.low < ci.high);
            assert!(ci.low < r.estimate + 0.5 && r.estimate - 0.5 < ci.high);
        }
    }
}
