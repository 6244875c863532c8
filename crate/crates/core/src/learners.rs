//! Parametric learners: weighted least squares and IRLS logistic regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability predictions are clipped to `[CLIP, 1 - CLIP]`.
pub const CLIP: f64 = 1e-12;

const RANK_RTOL: f64 = 1e-10;
const SCORE_TOL: f64 = 1e-8;
const STEP_RTOL: f64 = 1e-10;
const MAX_ITER: usize = 100;
const SEPARATION_NORM: f64 = 30.0;
const RIDGE: f64 = 1e-6;

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
    names: Vec<String>,
}

impl DesignMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if d == 0 {
            return Err(Error::DegenerateFit("design has no columns".into()));
        }
        if data.len() != n * d {
            return Err(Error::ShapeMismatch {
                expected: n * d,
                found: data.len(),
            });
        }
        if names.len() != d {
            return Err(Error::ShapeMismatch {
                expected: d,
                found: names.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateFit("design has non-finite entries".into()));
        }
        Ok(Self { n, d, data, names })
    }

    /// Builds a design from rows, naming columns `c0, c1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::ShapeMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        let names = (0..d).map(|j| format!("c{j}")).collect();
        Self::new(rows.len(), d, rows.concat(), names)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Every entry is 0/1 and every row has exactly one 1: a cell-indicator design.
    fn is_one_hot(&self) -> bool {
        self.rows().all(|r| {
            let mut ones = 0;
            for &v in r {
                if v == 1.0 {
                    ones += 1;
                } else if v != 0.0 {
                    return false;
                }
            }
            ones == 1
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStatus {
    pub converged: bool,
    pub iterations: usize,
    pub step_norm: f64,
    /// Separation or a boundary cell mean was detected; the returned fit is
    /// the ridge-stabilized (or clipped) one.
    pub separated: bool,
}

impl FitStatus {
    fn exact() -> Self {
        Self {
            converged: true,
            iterations: 0,
            step_norm: 0.0,
            separated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerFit {
    pub kind: LearnerKind,
    pub coefficients: Vec<f64>,
    pub status: FitStatus,
}

impl LearnerFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let eta: f64 = row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum();
        match self.kind {
            LearnerKind::Linear => eta,
            LearnerKind::Logistic => clip(sigmoid(eta)),
        }
    }
}

/// Feature construction for nuisance models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// Intercept, one regressor per treatment bit, covariate main effects.
    #[default]
    MainEffects,
    /// One indicator per treatment-history cell, covariate main effects.
    HistorySaturated,
    /// One indicator per observed (treatment history, covariate values) cell.
    Saturated,
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" | "main-effects" => Ok(Self::MainEffects),
            "history" | "history-saturated" => Ok(Self::HistorySaturated),
            "saturated" => Ok(Self::Saturated),
            other => Err(Error::Parse(format!("unknown feature mode '{other}'"))),
        }
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn clip(p: f64) -> f64 {
    p.clamp(CLIP, 1.0 - CLIP)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Rows with positive weight, together with their weights.
fn active_rows(n: usize, weights: Option<&[f64]>) -> Result<Vec<(usize, f64)>> {
    match weights {
        None => Ok((0..n).map(|i| (i, 1.0)).collect()),
        Some(w) => {
            if w.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: n,
                    found: w.len(),
                });
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::DegenerateFit(
                    "weights must be finite and nonnegative".into(),
                ));
            }
            Ok(w.iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(i, &v)| (i, v))
                .collect())
        }
    }
}

fn check_response(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::ShapeMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit(
            "response has non-finite entries".into(),
        ));
    }
    Ok(())
}

/// Weighted cell means for a one-hot design; empty cells get 0.
fn cell_means(x: &DesignMatrix, y: &[f64], rows: &[(usize, f64)]) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; x.ncols()];
    let mut mass = vec![0.0; x.ncols()];
    for &(i, w) in rows {
        let j = x
            .row(i)
            .iter()
            .position(|&v| v == 1.0)
            .expect("one-hot row");
        sum[j] += w * y[i];
        mass[j] += w;
    }
    let means = sum
        .iter()
        .zip(&mass)
        .map(|(s, m)| if *m > 0.0 { s / m } else { 0.0 })
        .collect();
    (means, mass)
}

/// Weighted least squares. Rank-deficient designs get the minimum-norm
/// solution, treating singular values below `1e-10 * max` as zero.
pub fn fit_linear(x: &DesignMatrix, y: &[f64], weights: Option<&[f64]>) -> Result<LearnerFit> {
    check_response(x, y)?;
    let rows = active_rows(x.nrows(), weights)?;
    if rows.is_empty() {
        return Err(Error::DegenerateFit("no rows with positive weight".into()));
    }
    let coefficients = if x.is_one_hot() {
        cell_means(x, y, &rows).0
    } else {
        let (m, d) = (rows.len(), x.ncols());
        let mut a = DMatrix::<f64>::zeros(m, d);
        let mut b = DVector::<f64>::zeros(m);
        for (r, &(i, w)) in rows.iter().enumerate() {
            let sw = w.sqrt();
            for (j, v) in x.row(i).iter().enumerate() {
                a[(r, j)] = sw * v;
            }
            b[r] = sw * y[i];
        }
        min_norm_solve(a, b)
    };
    Ok(LearnerFit {
        kind: LearnerKind::Linear,
        coefficients,
        status: FitStatus::exact(),
    })
}

fn min_norm_solve(a: DMatrix<f64>, b: DVector<f64>) -> Vec<f64> {
    let d = a.ncols();
    let (r, qtb) = if a.nrows() >= d {
        let qr = a.qr();
        let mut qtb = b;
        qr.q_tr_mul(&mut qtb);
        (qr.r(), qtb.rows(0, d).into_owned())
    } else {
        (a, b)
    };
    pinv_solve(r, &qtb)
}

fn pinv_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Vec<f64> {
    let d = a.ncols();
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 || !smax.is_finite() {
        return vec![0.0; d];
    }
    svd.solve(b, RANK_RTOL * smax)
        .map(|v| v.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; d])
}

/// Maximum-likelihood logistic regression by IRLS with step halving.
///
/// One-hot designs (including intercept-only) use the closed-form cell
/// means. When separation is detected the fit is redone with a small ridge
/// penalty and flagged as not converged.
pub fn fit_logistic(x: &DesignMatrix, y: &[f64], weights: Option<&[f64]>) -> Result<LearnerFit> {
    check_response(x, y)?;
    if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::DegenerateFit(
            "logistic response outside [0, 1]".into(),
        ));
    }
    let rows = active_rows(x.nrows(), weights)?;
    if rows.is_empty() {
        return Err(Error::DegenerateFit("no rows with positive weight".into()));
    }
    if x.is_one_hot() {
        let (means, mass) = cell_means(x, y, &rows);
        let boundary = means
            .iter()
            .zip(&mass)
            .any(|(p, m)| *m > 0.0 && (*p <= CLIP || *p >= 1.0 - CLIP));
        let coefficients = means
            .iter()
            .zip(&mass)
            .map(|(p, m)| if *m > 0.0 { logit(clip(*p)) } else { 0.0 })
            .collect();
        return Ok(LearnerFit {
            kind: LearnerKind::Logistic,
            coefficients,
            status: FitStatus {
                converged: !boundary,
                iterations: 0,
                step_norm: 0.0,
                separated: boundary,
            },
        });
    }
    let problem = Irls::new(x, y, &rows);
    match problem.run(0.0) {
        Some(fit) => Ok(fit),
        None => {
            let mut fit = problem
                .run(RIDGE)
                .expect("ridge-penalized problem cannot diverge");
            fit.status.converged = false;
            fit.status.separated = true;
            Ok(fit)
        }
    }
}

struct Irls<'a> {
    x: &'a DesignMatrix,
    y: &'a [f64],
    rows: &'a [(usize, f64)],
    /// Column standard deviations over the active rows (0 for constants).
    sd: Vec<f64>,
}

impl<'a> Irls<'a> {
    fn new(x: &'a DesignMatrix, y: &'a [f64], rows: &'a [(usize, f64)]) -> Self {
        let d = x.ncols();
        let total: f64 = rows.iter().map(|r| r.1).sum();
        let mut mean = vec![0.0; d];
        for &(i, w) in rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += w * v / total;
            }
        }
        let mut var = vec![0.0; d];
        for &(i, w) in rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += w * (v - m).powi(2) / total;
            }
        }
        let sd = var
            .iter()
            .map(|v| if *v > 1e-24 { v.sqrt() } else { 0.0 })
            .collect();
        Self { x, y, rows, sd }
    }

    fn penalized(&self, j: usize) -> bool {
        self.sd[j] > 0.0
    }

    fn eta(&self, i: usize, beta: &[f64]) -> f64 {
        self.x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    fn loglik(&self, beta: &[f64], lambda: f64) -> f64 {
        let mut ll = 0.0;
        for &(i, w) in self.rows {
            let eta = self.eta(i, beta);
            // log(1 + e^eta), computed stably
            let softplus = if eta > 0.0 {
                eta + (-eta).exp().ln_1p()
            } else {
                eta.exp().ln_1p()
            };
            ll += w * (self.y[i] * eta - softplus);
        }
        let pen: f64 = (0..beta.len())
            .filter(|&j| self.penalized(j))
            .map(|j| beta[j] * beta[j])
            .sum();
        ll - 0.5 * lambda * pen
    }

    /// Penalized score and Hessian (negated) at `beta`.
    fn score_hessian(&self, beta: &[f64], lambda: f64) -> (Vec<f64>, DMatrix<f64>) {
        let d = beta.len();
        let mut g = vec![0.0; d];
        let mut h = DMatrix::<f64>::zeros(d, d);
        for &(i, w) in self.rows {
            let row = self.x.row(i);
            let p = sigmoid(self.eta(i, beta));
            let resid = w * (self.y[i] - p);
            let curv = w * p * (1.0 - p);
            for a in 0..d {
                g[a] += resid * row[a];
                let ca = curv * row[a];
                if ca != 0.0 {
                    for b in 0..=a {
                        h[(a, b)] += ca * row[b];
                    }
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
            if self.penalized(a) {
                g[a] -= lambda * beta[a];
                h[(a, a)] += lambda;
            }
        }
        (g, h)
    }

    fn standardized_norm(&self, beta: &[f64]) -> f64 {
        beta.iter()
            .zip(&self.sd)
            .map(|(b, s)| (b * s).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Returns `None` when the unpenalized iterates diverge (separation).
    fn run(&self, lambda: f64) -> Option<LearnerFit> {
        let d = self.x.ncols();
        let mut beta = vec![0.0; d];
        let mut ll = self.loglik(&beta, lambda);
        let mut status = FitStatus {
            converged: false,
            iterations: 0,
            step_norm: f64::INFINITY,
            separated: false,
        };
        for it in 1..=MAX_ITER {
            status.iterations = it;
            let (g, h) = self.score_hessian(&beta, lambda);
            if g.iter().all(|v| v.abs() < SCORE_TOL) {
                status.converged = true;
                break;
            }
            let step = pinv_solve(h, &DVector::from_vec(g));
            let mut scale = 1.0;
            let mut candidate: Vec<f64>;
            let mut cand_ll;
            let mut halvings = 0;
            loop {
                candidate = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
                cand_ll = self.loglik(&candidate, lambda);
                if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) || halvings >= 40 {
                    break;
                }
                scale *= 0.5;
                halvings += 1;
            }
            let step_inf = step.iter().map(|s| (scale * s).abs()).fold(0.0, f64::max);
            let beta_inf = beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
            status.step_norm = step_inf;
            beta = candidate;
            ll = cand_ll;
            if lambda == 0.0 && self.standardized_norm(&beta) > SEPARATION_NORM {
                return None;
            }
            if step_inf <= STEP_RTOL * beta_inf.max(1.0) {
                status.converged = true;
                break;
            }
        }
        Some(LearnerFit {
            kind: LearnerKind::Logistic,
            coefficients: beta,
            status,
        })
    }
}

/// Predictions for every row of `x`.
pub fn predict(fit: &LearnerFit, x: &DesignMatrix) -> Result<Vec<f64>> {
    if x.ncols() != fit.coefficients.len() {
        return Err(Error::ShapeMismatch {
            expected: fit.coefficients.len(),
            found: x.ncols(),
        });
    }
    Ok(x.rows().map(|r| fit.predict_row(r)).collect())
}

/// Score vector `X'W(y - p)` of an unpenalized logistic model.
pub fn logistic_score(
    x: &DesignMatrix,
    y: &[f64],
    weights: Option<&[f64]>,
    beta: &[f64],
) -> Vec<f64> {
    let mut g = vec![0.0; x.ncols()];
    for i in 0..x.nrows() {
        let w = weights.map_or(1.0, |w| w[i]);
        let eta: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        let r = w * (y[i] - sigmoid(eta));
        for (gj, v) in g.iter_mut().zip(x.row(i)) {
            *gj += r * v;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn design(rows: &[Vec<f64>]) -> DesignMatrix {
        DesignMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn exact_line_is_recovered() {
        let x = design(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        let fit = fit_linear(&x, &[0.0, 2.0, 4.0], None).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!((fit.predict_row(&[1.0, 5.0]) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_linear_is_the_mean() {
        let x = design(&[vec![1.0], vec![1.0]]);
        let fit = fit_linear(&x, &[1.0, 3.0], None).unwrap();
        assert_eq!(fit.coefficients, vec![2.0]);
    }

    #[test]
    fn least_squares_residuals_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let y: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        let x = design(&rows);
        let fit = fit_linear(&x, &y, None).unwrap();
        let pred = predict(&fit, &x).unwrap();
        for j in 0..3 {
            let dot: f64 = rows
                .iter()
                .zip(y.iter().zip(&pred))
                .map(|(r, (y, p))| r[j] * (y - p))
                .sum();
            assert!(dot.abs() < 1e-8, "column {j}: {dot}");
        }
    }

    #[test]
    fn rank_deficient_design_gets_minimum_norm() {
        // Two identical columns: the minimum-norm solution splits the effect.
        let x = design(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        let fit = fit_linear(&x, &[2.0, 4.0, 6.0], None).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn empty_fit_is_degenerate() {
        let x = DesignMatrix::new(0, 1, vec![], vec!["c".into()]).unwrap();
        assert!(matches!(
            fit_linear(&x, &[], None),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_logistic(&x, &[], None),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn intercept_only_logistic_is_the_mean() {
        let x = design(&vec![vec![1.0]; 4]);
        let fit = fit_logistic(&x, &[0.0, 1.0, 1.0, 1.0], None).unwrap();
        assert!((fit.predict_row(&[1.0]) - 0.75).abs() < 1e-12);
        assert!(fit.status.converged);
    }

    #[test]
    fn constant_response_is_clipped_and_flagged() {
        let x = design(&vec![vec![1.0]; 3]);
        let fit = fit_logistic(&x, &[1.0, 1.0, 1.0], None).unwrap();
        assert!((fit.predict_row(&[1.0]) - (1.0 - CLIP)).abs() < 1e-15);
        assert!(fit.status.separated && !fit.status.converged);
    }

    #[test]
    fn zero_row_predicts_one_half() {
        let fit = LearnerFit {
            kind: LearnerKind::Logistic,
            coefficients: vec![0.0, 3.0],
            status: FitStatus::exact(),
        };
        assert_eq!(fit.predict_row(&[0.0, 0.0]), 0.5);
        assert_eq!(fit.predict_row(&[0.0, 1e6]), 1.0 - CLIP);
        assert_eq!(fit.predict_row(&[0.0, -1e6]), CLIP);
    }

    #[test]
    fn predict_checks_width() {
        let fit = LearnerFit {
            kind: LearnerKind::Linear,
            coefficients: vec![0.0, 2.0],
            status: FitStatus::exact(),
        };
        let x = design(&[vec![1.0]]);
        assert!(matches!(
            predict(&fit, &x),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn separation_is_detected_and_stabilized() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![1.0, i as f64 - 19.5]).collect();
        let y: Vec<f64> = (0..40).map(|i| if i >= 20 { 1.0 } else { 0.0 }).collect();
        let fit = fit_logistic(&design(&rows), &y, None).unwrap();
        assert!(fit.status.separated);
        assert!(!fit.status.converged);
        assert!(fit.coefficients.iter().all(|b| b.is_finite()));
        assert!(fit.predict_row(&[1.0, 10.0]) > 0.99);
    }

    #[test]
    fn logistic_recovers_known_coefficients() {
        // Fisher information at the truth gives the reference standard errors.
        let truth = [0.2, 0.2, -0.4];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let r = vec![1.0, rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let p = sigmoid(r.iter().zip(&truth).map(|(a, b)| a * b).sum());
            y.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
            rows.push(r);
        }
        let x = design(&rows);
        let fit = fit_logistic(&x, &y, None).unwrap();
        assert!(fit.status.converged);
        let mut info = DMatrix::<f64>::zeros(3, 3);
        for r in &rows {
            let p = sigmoid(r.iter().zip(&truth).map(|(a, b)| a * b).sum());
            for a in 0..3 {
                for b in 0..3 {
                    info[(a, b)] += p * (1.0 - p) * r[a] * r[b];
                }
            }
        }
        let cov = info.try_inverse().unwrap();
        for j in 0..3 {
            let se = cov[(j, j)].sqrt();
            assert!(
                (fit.coefficients[j] - truth[j]).abs() < 3.0 * se,
                "coef {j}: {} vs {} (se {se})",
                fit.coefficients[j],
                truth[j]
            );
        }
    }

    fn random_problem(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                std::iter::once(1.0)
                    .chain((1..d).map(|_| rng.sample(StandardNormal)))
                    .collect()
            })
            .collect();
        let y = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let w = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        (rows, y, w)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn duplicated_rows_with_halved_weights_match(seed in 0u64..10_000, n in 6usize..40, d in 1usize..5) {
            let (rows, y, w) = random_problem(seed, n, d);
            let base = fit_linear(&design(&rows), &y, Some(&w)).unwrap();
            let rows2: Vec<Vec<f64>> = rows.iter().chain(&rows).cloned().collect();
            let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
            let w2: Vec<f64> = w.iter().chain(&w).map(|v| v / 2.0).collect();
            let dup = fit_linear(&design(&rows2), &y2, Some(&w2)).unwrap();
            for (a, b) in base.coefficients.iter().zip(&dup.coefficients) {
                prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }

        #[test]
        fn converged_logistic_fits_have_small_score(seed in 0u64..10_000, n in 20usize..120, d in 1usize..4) {
            let (rows, z, w) = random_problem(seed, n, d);
            let y: Vec<f64> = z.iter().map(|v| if *v > 0.3 { 1.0 } else { 0.0 }).collect();
            let x = design(&rows);
            let fit = fit_logistic(&x, &y, Some(&w)).unwrap();
            if fit.status.converged {
                let g = logistic_score(&x, &y, Some(&w), &fit.coefficients);
                prop_assert!(g.iter().all(|v| v.abs() < 1e-6), "score {g:?}");
            }
        }

        #[test]
        fn logistic_predictions_respect_clip(seed in 0u64..10_000, scale in 0.0f64..1e4) {
            let (rows, z, _) = random_problem(seed, 30, 3);
            let y: Vec<f64> = z.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
            let fit = fit_logistic(&design(&rows), &y, None).unwrap();
            for r in &rows {
                let big: Vec<f64> = r.iter().map(|v| v * scale).collect();
                let p = fit.predict_row(&big);
                prop_assert!((CLIP..=1.0 - CLIP).contains(&p));
            }
        }

        #[test]
        fn predict_is_pure(seed in 0u64..10_000) {
            let (rows, y, _) = random_problem(seed, 12, 3);
            let x = design(&rows);
            let fit = fit_linear(&x, &y, None).unwrap();
            prop_assert_eq!(predict(&fit, &x).unwrap(), predict(&fit, &x).unwrap());
        }
    }
}
