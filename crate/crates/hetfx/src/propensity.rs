//! Participation-probability estimation, common-support trimming, and the
//! normalized inverse-probability weights.
//!
//! The weight for a treated observation is proportional to 1/p̂ and for a
//! control to 1/(1−p̂); each group is normalized to sum to one, so weighted
//! group sums are directly comparable ("small sample adjustment").

use crate::error::{Error, Result};
use crate::linalg::{self, DEFAULT_RANK_TOL};
use crate::stats;
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug)]
pub struct LogitOptions {
    /// Convergence tolerance on the L2 norm of the score vector.
    pub tol: f64,
    pub max_iter: usize,
    /// Any |coefficient| beyond this is treated as perfect separation.
    pub coef_cap: f64,
}

impl Default for LogitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            coef_cap: 30.0,
        }
    }
}

/// Fitted logistic participation model.
#[derive(Clone, Debug)]
pub struct PropensityModel {
    /// Intercept followed by one coefficient per kept covariate column.
    pub coefficients: Vec<f64>,
    /// Covariate columns retained after rank screening, ascending.
    pub kept: Vec<usize>,
    /// Covariate columns dropped as collinear (warned, not an error).
    pub dropped: Vec<usize>,
    pub iterations: usize,
    pub final_gradient_norm: f64,
}

impl PropensityModel {
    pub fn linear_predictor(&self, x: &ArrayView2<f64>) -> Array1<f64> {
        let mut eta = Array1::<f64>::from_elem(x.nrows(), self.coefficients[0]);
        for (slot, &j) in self.kept.iter().enumerate() {
            let b = self.coefficients[slot + 1];
            for i in 0..x.nrows() {
                eta[i] += b * x[(i, j)];
            }
        }
        eta
    }

    /// Predicted participation probabilities, strictly inside (0, 1).
    pub fn predict(&self, x: &ArrayView2<f64>) -> Array1<f64> {
        self.linear_predictor(x).mapv(sigmoid)
    }
}

fn sigmoid(eta: f64) -> f64 {
    // Symmetric form avoids overflow; output stays strictly inside (0,1)
    // for finite eta.
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(d: &[bool], eta: &Array1<f64>) -> f64 {
    // sum_i d·eta − log(1 + exp(eta)), in the stable log1p form.
    let mut ll = 0.0;
    for (i, &di) in d.iter().enumerate() {
        let e = eta[i];
        let log1pexp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
        ll += if di { e } else { 0.0 } - log1pexp;
    }
    ll
}

/// Maximum-likelihood logistic fit of treatment on an intercept plus the
/// given covariate columns, by Newton iterations with step halving (the
/// log-likelihood is non-decreasing across iterations by construction).
///
/// Collinear covariate columns are dropped up front by rank screening of the
/// centered design and reported in [`PropensityModel::dropped`].
pub fn fit_logit(x: &ArrayView2<f64>, d: &[bool], opts: &LogitOptions) -> Result<PropensityModel> {
    let n = x.nrows();
    if d.len() != n {
        return Err(Error::InvalidArgument("treatment length must match row count".into()));
    }
    let n_treated = d.iter().filter(|&&t| t).count();
    if n_treated == 0 || n_treated == n {
        return Err(Error::Degenerate("both treatment groups must be non-empty".into()));
    }

    // Rank screening: center columns (removing the intercept direction) and
    // keep a maximal linearly independent set. Constant columns center to
    // zero and drop out here.
    let p = x.ncols();
    let kept: Vec<usize>;
    let dropped: Vec<usize>;
    if p > 0 {
        let mut centered = x.to_owned();
        for j in 0..p {
            let mean = centered.column(j).sum() / n as f64;
            centered.column_mut(j).mapv_inplace(|v| v - mean);
        }
        let probe = linalg::lstsq(
            centered.view(),
            Array1::<f64>::zeros(n).view(),
            DEFAULT_RANK_TOL,
        );
        kept = probe.kept;
        dropped = probe.dropped;
    } else {
        kept = Vec::new();
        dropped = Vec::new();
    }

    // Design: intercept plus kept columns.
    let k = kept.len();
    let mut design = Array2::<f64>::ones((n, k + 1));
    for (slot, &j) in kept.iter().enumerate() {
        for i in 0..n {
            design[(i, slot + 1)] = x[(i, j)];
        }
    }

    let mut beta = Array1::<f64>::zeros(k + 1);
    let mut eta = design.dot(&beta);
    let mut ll = log_likelihood(d, &eta);
    let mut grad_norm = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        let probs = eta.mapv(sigmoid);
        // Score g = X'(d − p); IRLS weights p(1−p).
        let resid: Array1<f64> =
            Array1::from_iter((0..n).map(|i| (if d[i] { 1.0 } else { 0.0 }) - probs[i]));
        let grad = design.t().dot(&resid);
        grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm <= opts.tol {
            return Ok(PropensityModel {
                coefficients: beta.to_vec(),
                kept,
                dropped,
                iterations: iter - 1,
                final_gradient_norm: grad_norm,
            });
        }

        // Newton direction from the weighted least-squares subproblem:
        // argmin_delta sum_i w_i (e_i − x_i'delta)^2, w = p(1−p), e = (d−p)/w.
        let irls_w: Vec<f64> = probs.iter().map(|&pi| (pi * (1.0 - pi)).max(1e-12)).collect();
        let working: Array1<f64> =
            Array1::from_iter((0..n).map(|i| resid[i] / irls_w[i]));
        let step = linalg::weighted_lstsq(design.view(), working.view(), &irls_w, DEFAULT_RANK_TOL);
        let direction = step.coefficients;

        // Step halving keeps the log-likelihood non-decreasing.
        let mut scale = 1.0f64;
        let mut improved = false;
        for _ in 0..40 {
            let candidate = &beta + &(direction.mapv(|v| v * scale));
            let cand_eta = design.dot(&candidate);
            let cand_ll = log_likelihood(d, &cand_eta);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = candidate;
                eta = cand_eta;
                debug_assert!(
                    cand_ll >= ll - 1e-9 * ll.abs().max(1.0),
                    "log-likelihood decreased: {ll} -> {cand_ll}"
                );
                ll = cand_ll;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            return Err(Error::NoConvergence {
                iterations: iter,
                criterion: grad_norm,
                tolerance: opts.tol,
            });
        }
        if beta.iter().any(|b| b.abs() > opts.coef_cap) {
            return Err(Error::PerfectSeparation { cap: opts.coef_cap });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        criterion: grad_norm,
        tolerance: opts.tol,
    })
}

/// Average marginal effects of the fitted model, one entry per kept
/// covariate: the mean of p̂(1−p̂)·coef for continuous columns and the
/// average discrete 0→1 probability contrast for binary columns.
pub fn average_marginal_effects(model: &PropensityModel, x: &ArrayView2<f64>) -> Vec<f64> {
    let n = x.nrows();
    let eta = model.linear_predictor(x);
    let probs = eta.mapv(sigmoid);
    model
        .kept
        .iter()
        .enumerate()
        .map(|(slot, &j)| {
            let coef = model.coefficients[slot + 1];
            let col = x.column(j);
            let is_binary = col.iter().all(|&v| v == 0.0 || v == 1.0);
            if is_binary {
                let mut sum = 0.0;
                for i in 0..n {
                    let base = eta[i] - coef * col[i];
                    sum += sigmoid(base + coef) - sigmoid(base);
                }
                sum / n as f64
            } else {
                probs.iter().map(|&p| p * (1.0 - p) * coef).sum::<f64>() / n as f64
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrimReport {
    pub lower: f64,
    pub upper: f64,
    pub dropped_treated: usize,
    pub dropped_controls: usize,
    pub retained: usize,
}

#[derive(Clone, Debug)]
pub struct TrimResult {
    /// Indices retained, in original order.
    pub retained: Vec<usize>,
    pub report: TrimReport,
}

/// Enforce common support: the lower bound is the 0.5th percentile of p̂
/// among the treated, the upper the 99.5th percentile among controls;
/// observations in either group outside [lower, upper] are dropped.
pub fn trim_common_support(phat: &[f64], d: &[bool]) -> Result<TrimResult> {
    if phat.len() != d.len() {
        return Err(Error::InvalidArgument("propensity and treatment lengths differ".into()));
    }
    validate_probabilities(phat)?;
    let treated: Vec<f64> = phat.iter().zip(d).filter(|(_, &t)| t).map(|(&p, _)| p).collect();
    let controls: Vec<f64> = phat.iter().zip(d).filter(|(_, &t)| !t).map(|(&p, _)| p).collect();
    if treated.is_empty() || controls.is_empty() {
        return Err(Error::Degenerate("both treatment groups must be non-empty".into()));
    }
    let lower = stats::percentile(&treated, 0.005);
    let upper = stats::percentile(&controls, 0.995);

    let mut retained = Vec::with_capacity(phat.len());
    let mut dropped_treated = 0usize;
    let mut dropped_controls = 0usize;
    for (i, (&p, &t)) in phat.iter().zip(d).enumerate() {
        if p < lower || p > upper {
            if t {
                dropped_treated += 1;
            } else {
                dropped_controls += 1;
            }
        } else {
            retained.push(i);
        }
    }
    let any_treated = retained.iter().any(|&i| d[i]);
    let any_control = retained.iter().any(|&i| !d[i]);
    if !any_treated || !any_control {
        return Err(Error::Degenerate(
            "trimming removed an entire treatment group; supports do not overlap".into(),
        ));
    }
    let report = TrimReport {
        lower,
        upper,
        dropped_treated,
        dropped_controls,
        retained: retained.len(),
    };
    Ok(TrimResult { retained, report })
}

/// Nonnegative balancing weights, normalized to sum to one within the
/// treated and within the control group.
#[derive(Clone, Debug)]
pub struct WeightVector {
    weights: Vec<f64>,
}

pub const WEIGHT_SUM_TOL: f64 = 1e-12;

impl WeightVector {
    /// Wrap precomputed weights, enforcing nonnegativity and the per-group
    /// unit-sum contract to 1e-12.
    pub fn new(weights: Vec<f64>, d: &[bool]) -> Result<Self> {
        if weights.len() != d.len() {
            return Err(Error::InvalidArgument("weight and treatment lengths differ".into()));
        }
        if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
            return Err(Error::Validation(format!("invalid weight {w}")));
        }
        let sum_t = stats::kahan_sum(weights.iter().zip(d).filter(|(_, &t)| t).map(|(&w, _)| w));
        let sum_c = stats::kahan_sum(weights.iter().zip(d).filter(|(_, &t)| !t).map(|(&w, _)| w));
        for (label, sum) in [("treated", sum_t), ("control", sum_c)] {
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::Validation(format!(
                    "{label} weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL}"
                )));
            }
        }
        Ok(Self { weights })
    }

    /// Wrap weights without the per-group unit-sum check. For subsystem use
    /// where a subsample's sums intentionally differ (e.g. the sensitivity
    /// mode that skips re-normalizing half-sample weights).
    pub(crate) fn new_unchecked(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn validate_probabilities(phat: &[f64]) -> Result<()> {
    if let Some((i, p)) = phat
        .iter()
        .enumerate()
        .find(|(_, &p)| !(p > 0.0 && p < 1.0))
    {
        return Err(Error::Validation(format!(
            "propensity score at index {i} is {p}; scores must lie strictly in (0,1)"
        )));
    }
    Ok(())
}

/// Normalize raw inverse-propensity weights within groups (no renormalized
/// validation round-trip); shared with subsample refits.
pub(crate) fn normalized_ipw(phat: &[f64], d: &[bool]) -> Vec<f64> {
    let raw: Vec<f64> = phat
        .iter()
        .zip(d)
        .map(|(&p, &t)| if t { 1.0 / p } else { 1.0 / (1.0 - p) })
        .collect();
    renormalize_within_groups(&raw, d)
}

/// Rescale arbitrary nonnegative weights so each treatment group sums to one.
pub(crate) fn renormalize_within_groups(weights: &[f64], d: &[bool]) -> Vec<f64> {
    let sum_t = stats::kahan_sum(weights.iter().zip(d).filter(|(_, &t)| t).map(|(&w, _)| w));
    let sum_c = stats::kahan_sum(weights.iter().zip(d).filter(|(_, &t)| !t).map(|(&w, _)| w));
    weights
        .iter()
        .zip(d)
        .map(|(&w, &t)| if t { w / sum_t } else { w / sum_c })
        .collect()
}

/// The Eq.-(3) weights: treated i gets (1/p̂ᵢ)/Σ_treated(1/p̂ⱼ), control i
/// gets (1/(1−p̂ᵢ))/Σ_control(1/(1−p̂ⱼ)).
pub fn ipw_weights(phat: &[f64], d: &[bool]) -> Result<WeightVector> {
    if phat.len() != d.len() {
        return Err(Error::InvalidArgument("propensity and treatment lengths differ".into()));
    }
    validate_probabilities(phat)?;
    if !d.iter().any(|&t| t) || !d.iter().any(|&t| !t) {
        return Err(Error::Degenerate("both treatment groups must be non-empty".into()));
    }
    WeightVector::new(normalized_ipw(phat, d), d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn intercept_only_fit_matches_closed_form() {
        // 30 treated of 100: intercept = log(30/70).
        let x = Array2::<f64>::zeros((100, 0));
        let d: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let model = fit_logit(&x.view(), &d, &LogitOptions::default()).unwrap();
        let expected = (30.0f64 / 70.0).ln();
        assert!((model.coefficients[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn independent_treatment_gives_null_slopes() {
        let n = 10_000;
        let mut rng = crate::rng::seeded_rng(5150);
        let mut x = Array2::<f64>::zeros((n, 3));
        let mut d = vec![false; n];
        for i in 0..n {
            for j in 0..3 {
                x[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
            d[i] = rng.gen::<f64>() < 0.5;
        }
        let model = fit_logit(&x.view(), &d, &LogitOptions::default()).unwrap();
        // Slope SEs are about 2/sqrt(n) = 0.02 here; 3 SEs = 0.06.
        for slot in 1..model.coefficients.len() {
            assert!(
                model.coefficients[slot].abs() < 0.06,
                "slope {} too large",
                model.coefficients[slot]
            );
        }
    }

    #[test]
    fn perfect_separation_is_detected() {
        let n = 200;
        let mut x = Array2::<f64>::zeros((n, 1));
        let mut d = vec![false; n];
        for i in 0..n {
            x[(i, 0)] = i as f64 / n as f64 - 0.5;
            d[i] = x[(i, 0)] > 0.0;
        }
        let err = fit_logit(&x.view(), &d, &LogitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::PerfectSeparation { .. }));
    }

    #[test]
    fn collinear_column_is_dropped_not_fatal() {
        let n = 400;
        let mut rng = crate::rng::seeded_rng(77);
        let mut x = Array2::<f64>::zeros((n, 2));
        let mut d = vec![false; n];
        for i in 0..n {
            let v: f64 = rng.sample(StandardNormal);
            x[(i, 0)] = v;
            x[(i, 1)] = 2.0 * v; // exactly collinear
            d[i] = rng.gen::<f64>() < sigmoid(0.5 * v);
        }
        let model = fit_logit(&x.view(), &d, &LogitOptions::default()).unwrap();
        assert_eq!(model.kept.len(), 1);
        assert_eq!(model.dropped.len(), 1);
    }

    #[test]
    fn ame_zero_coefficient_and_intercept_only() {
        let x = Array2::<f64>::zeros((10, 0));
        let d: Vec<bool> = (0..10).map(|i| i < 4).collect();
        let model = fit_logit(&x.view(), &d, &LogitOptions::default()).unwrap();
        assert!(average_marginal_effects(&model, &x.view()).is_empty());
    }

    #[test]
    fn ame_continuous_closed_form() {
        // Single continuous covariate, coefficient 1, all p̂ = 0.5 (achieved
        // with intercept 0 and x = 0 everywhere): AME = 0.25.
        let x = Array2::<f64>::zeros((8, 1));
        let model = PropensityModel {
            coefficients: vec![0.0, 1.0],
            kept: vec![0],
            dropped: vec![],
            iterations: 0,
            final_gradient_norm: 0.0,
        };
        // x is all zeros, which would be classified binary; perturb one
        // value to keep it continuous without moving p̂ meaningfully.
        let mut x = x;
        x[(0, 0)] = 1e-9;
        let ame = average_marginal_effects(&model, &x.view());
        assert!((ame[0] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn ame_binary_contrast() {
        let mut x = Array2::<f64>::zeros((4, 1));
        x[(1, 0)] = 1.0;
        x[(3, 0)] = 1.0;
        let model = PropensityModel {
            coefficients: vec![-0.3, 0.8],
            kept: vec![0],
            dropped: vec![],
            iterations: 0,
            final_gradient_norm: 0.0,
        };
        let ame = average_marginal_effects(&model, &x.view());
        let expected = sigmoid(0.5) - sigmoid(-0.3);
        assert!((ame[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn identical_scores_trim_nothing() {
        let phat = vec![0.4; 10];
        let d: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let out = trim_common_support(&phat, &d).unwrap();
        assert_eq!(out.retained.len(), 10);
        assert_eq!(out.report.dropped_treated + out.report.dropped_controls, 0);
    }

    #[test]
    fn lower_bound_matches_brute_force_percentile() {
        // Treated scores 1..200 scaled into (0,1); the 0.5th percentile under
        // linear interpolation: h = 199·0.005 = 0.995 (0-based), i.e.
        // v[0] + 0.995·(v[1] − v[0]).
        let treated: Vec<f64> = (1..=200).map(|k| k as f64 / 201.0).collect();
        let v0 = 1.0 / 201.0;
        let v1 = 2.0 / 201.0;
        let expected = v0 + 0.995 * (v1 - v0);

        let mut phat = treated.clone();
        let mut d = vec![true; 200];
        // controls spread over the same range so the upper bound binds nothing
        phat.extend((1..=200).map(|k| k as f64 / 201.0));
        d.extend(std::iter::repeat_n(false, 200));
        let out = trim_common_support(&phat, &d).unwrap();
        assert!((out.report.lower - expected).abs() < 1e-12);
        for &i in &out.retained {
            assert!(phat[i] >= out.report.lower && phat[i] <= out.report.upper);
        }
        assert!(out.report.lower <= out.report.upper);
    }

    #[test]
    fn one_of_each_group_weights_are_one() {
        let w = ipw_weights(&[0.3, 0.9], &[true, false]).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn two_treated_weights_normalize() {
        // p̂ = 0.2, 0.4 → raw 5, 2.5 → normalized 2/3, 1/3.
        let w = ipw_weights(&[0.2, 0.4, 0.5], &[true, true, false]).unwrap();
        assert!((w.as_slice()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.as_slice()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w.as_slice()[2], 1.0);
    }

    #[test]
    fn uniform_scores_give_uniform_weights() {
        let n1 = 7;
        let mut phat = vec![0.5; 20];
        phat.iter_mut().for_each(|p| *p = 0.5);
        let d: Vec<bool> = (0..20).map(|i| i < n1).collect();
        let w = ipw_weights(&phat, &d).unwrap();
        for i in 0..n1 {
            assert!((w.as_slice()[i] - 1.0 / n1 as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_range_score_rejected() {
        assert!(ipw_weights(&[0.0, 0.5], &[true, false]).is_err());
        assert!(ipw_weights(&[1.0, 0.5], &[true, false]).is_err());
    }

    #[test]
    fn permutation_equivariance_of_weights() {
        let phat = vec![0.2, 0.7, 0.4, 0.6, 0.55];
        let d = vec![true, false, true, false, true];
        let w = ipw_weights(&phat, &d).unwrap();
        let perm = [4usize, 2, 0, 3, 1];
        let phat_p: Vec<f64> = perm.iter().map(|&i| phat[i]).collect();
        let d_p: Vec<bool> = perm.iter().map(|&i| d[i]).collect();
        let w_p = ipw_weights(&phat_p, &d_p).unwrap();
        for (slot, &i) in perm.iter().enumerate() {
            assert!((w_p.as_slice()[slot] - w.as_slice()[i]).abs() < 1e-15);
        }
    }
}
