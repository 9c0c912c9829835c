//! Treatment-effect regressions on the modified-covariate design.
//!
//! With the recoded treatment `T = 2D − 1`, regressing the outcome on the
//! columns `T·Z/2` under group-normalized balancing weights estimates the
//! coefficients of a linear CATE approximation directly: the fitted
//! `delta` yields the effect predictor `z·delta`. Main effects of `Z` can be
//! absorbed for efficiency either by stacking `[Z | T·Z/2]` and fitting both
//! blocks jointly in one penalized regression ("one-step") or by first
//! residualizing the outcome on a penalized main-effects fit ("two-step").
//! Both augmentation variants are reconstructions of the one- and two-stage
//! schemes in Tian et al. (2014) and Chen et al. (2017).
//!
//! The modified-outcome alternative transforms the outcome as
//! `y·(D − p̂)/(p̂(1−p̂))`, whose conditional mean given `Z` is the CATE, and
//! regresses it on `Z` without weights.

use crate::error::{Error, Result};
use crate::propensity::WeightVector;
use crate::solvers::{
    cross_validate_lambda, post_lasso_refit, weighted_lasso, CvOptions, CvRow, LassoOptions,
    LoadingMode,
};
use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Efficiency-augmentation mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EaMode {
    #[default]
    None,
    /// Joint penalized fit of `[Z | T·Z/2]`, both block constants unpenalized.
    OneStep,
    /// Penalized main-effects fit of `y` on `Z` first, then the
    /// modified-covariate regression on the residual.
    TwoStep,
}

/// Variable-selection strategy for effect fits.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Selector {
    CvLasso,
    CvAdaptiveLasso { gamma: f64, floor: f64 },
    FixedLambda { lambda: f64 },
}

/// Selector plus tuning shared by every effect regression.
#[derive(Clone, Debug)]
pub struct SelectorOptions {
    pub selector: Selector,
    pub folds: usize,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub lasso: LassoOptions,
}

impl Default for SelectorOptions {
    fn default() -> Self {
        Self {
            selector: Selector::CvLasso,
            folds: 10,
            n_lambda: 100,
            lambda_min_ratio: 1e-4,
            // Selection-grade tolerance; reported coefficients come from
            // the unpenalized refit.
            lasso: LassoOptions {
                tol: 1e-5,
                ..LassoOptions::default()
            },
        }
    }
}

/// The transformed design: `t` holds `2D − 1` and column `j` of `modified`
/// equals `t·z_j/2` elementwise (the constant's modified column is `t/2`).
#[derive(Clone, Debug)]
pub struct McmDesign {
    pub t: Vec<f64>,
    pub modified: Array2<f64>,
}

pub fn mcm_transform(d: &[bool], z: &ArrayView2<f64>) -> Result<McmDesign> {
    let n = z.nrows();
    if d.len() != n {
        return Err(Error::InvalidArgument("treatment length must match design rows".into()));
    }
    if n == 0 || z.ncols() == 0 {
        return Err(Error::InvalidArgument("empty design".into()));
    }
    if (0..n).any(|i| z[(i, 0)] != 1.0) {
        return Err(Error::InvalidArgument("first heterogeneity column must be the constant".into()));
    }
    let t: Vec<f64> = d.iter().map(|&di| if di { 1.0 } else { -1.0 }).collect();
    let mut modified = z.to_owned();
    for i in 0..n {
        let half_t = t[i] / 2.0;
        for j in 0..z.ncols() {
            modified[(i, j)] = half_t * z[(i, j)];
        }
    }
    Ok(McmDesign { t, modified })
}

/// Estimation method tag carried on effect fits and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodTag {
    McmNone,
    McmOneStep,
    McmTwoStep,
    Mom,
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MethodTag::McmNone => "mcm-none",
            MethodTag::McmOneStep => "mcm-one-step",
            MethodTag::McmTwoStep => "mcm-two-step",
            MethodTag::Mom => "mom",
        };
        f.write_str(s)
    }
}

/// Penalized main-effects fit (two-step residualization or the main block
/// of a one-step fit), over heterogeneity columns.
#[derive(Clone, Debug)]
pub struct MainEffectFit {
    /// Non-constant columns selected by the LASSO step, ascending.
    pub selected: Vec<usize>,
    /// Post-LASSO coefficients over all heterogeneity columns.
    pub coefficients: Array1<f64>,
}

/// A fitted effect regression: `delta` over heterogeneity columns with the
/// CATE predictor `z·delta`.
#[derive(Clone, Debug)]
pub struct EffectFit {
    pub method: MethodTag,
    /// Post-LASSO effect coefficients, indexed by heterogeneity column;
    /// nonzero only on the selected set and the constant.
    pub delta: Array1<f64>,
    /// Non-constant heterogeneity columns selected by the LASSO step.
    pub selected: Vec<usize>,
    pub lambda: Option<f64>,
    pub cv_table: Option<Vec<CvRow>>,
    pub main: Option<MainEffectFit>,
}

impl EffectFit {
    /// CATE predictions `z·delta` for each row.
    pub fn predict(&self, z: &ArrayView2<f64>) -> Array1<f64> {
        z.dot(&self.delta)
    }
}

struct SelectorFit {
    lambda: Option<f64>,
    selected: Vec<usize>,
    post: Array1<f64>,
    cv_table: Option<Vec<CvRow>>,
}

fn run_selector(
    design: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: &[f64],
    clusters: &[usize],
    unpenalized: &[usize],
    sel: &SelectorOptions,
    seed: u64,
) -> Result<SelectorFit> {
    match &sel.selector {
        Selector::FixedLambda { lambda } => {
            let loadings: Vec<f64> = (0..design.ncols())
                .map(|j| if unpenalized.contains(&j) { 0.0 } else { 1.0 })
                .collect();
            let coefs = weighted_lasso(design, y, weights, *lambda, &loadings, &sel.lasso)?;
            let selected: Vec<usize> = coefs
                .iter()
                .enumerate()
                .filter(|(j, &b)| loadings[*j] > 0.0 && b != 0.0)
                .map(|(j, _)| j)
                .collect();
            let (post, _) = post_lasso_refit(design, y, weights, &selected, unpenalized)?;
            Ok(SelectorFit {
                lambda: Some(*lambda),
                selected,
                post,
                cv_table: None,
            })
        }
        cv_kind => {
            let loading_mode = match cv_kind {
                Selector::CvLasso => LoadingMode::Unit,
                Selector::CvAdaptiveLasso { gamma, floor } => LoadingMode::Adaptive {
                    gamma: *gamma,
                    floor: *floor,
                },
                Selector::FixedLambda { .. } => unreachable!(),
            };
            let opts = CvOptions {
                folds: sel.folds,
                n_lambda: sel.n_lambda,
                lambda_min_ratio: sel.lambda_min_ratio,
                grid: None,
                loading_mode,
                lasso: sel.lasso,
                seed,
            };
            let fit = cross_validate_lambda(design, y, weights, clusters, unpenalized, &opts)?;
            Ok(SelectorFit {
                lambda: Some(fit.lambda),
                selected: fit.selected,
                post: fit.post_lasso,
                cv_table: Some(fit.cv_table),
            })
        }
    }
}

/// Absorb main effects of the heterogeneity design before (or alongside)
/// the effect regression. `None` leaves the outcome untouched; `TwoStep`
/// returns the residual from a penalized main-effects fit; `OneStep`
/// returns the outcome unchanged (the stacking happens inside
/// [`fit_mcm`]).
pub fn efficiency_augment(
    y: ArrayView1<f64>,
    z: &ArrayView2<f64>,
    weights: &[f64],
    clusters: &[usize],
    mode: EaMode,
    sel: &SelectorOptions,
    seed: u64,
) -> Result<(Array1<f64>, Option<MainEffectFit>)> {
    match mode {
        EaMode::None | EaMode::OneStep => Ok((y.to_owned(), None)),
        EaMode::TwoStep => {
            let fit = run_selector(z.view(), y, weights, clusters, &[0], sel, seed)?;
            let resid = &y.to_owned() - &z.dot(&fit.post);
            Ok((
                resid,
                Some(MainEffectFit {
                    selected: fit.selected,
                    coefficients: fit.post,
                }),
            ))
        }
    }
}

/// Fit the modified-covariate effect regression.
///
/// `weights` must be the group-normalized balancing weights for exactly
/// these rows. The returned `delta` contains the Post-LASSO coefficients;
/// the LASSO step determines the selected set.
#[allow(clippy::too_many_arguments)]
pub fn fit_mcm(
    y: ArrayView1<f64>,
    z: &ArrayView2<f64>,
    d: &[bool],
    clusters: &[usize],
    weights: &WeightVector,
    ea: EaMode,
    sel: &SelectorOptions,
    seed: u64,
) -> Result<EffectFit> {
    let n = z.nrows();
    if y.len() != n || d.len() != n || clusters.len() != n || weights.len() != n {
        return Err(Error::InvalidArgument("input lengths disagree".into()));
    }
    let p = z.ncols();
    let mcm = mcm_transform(d, z)?;
    let w = weights.as_slice();

    match ea {
        EaMode::None | EaMode::TwoStep => {
            let (y_adj, main) = efficiency_augment(y, z, w, clusters, ea, sel, seed)?;
            let fit = run_selector(mcm.modified.view(), y_adj.view(), w, clusters, &[0], sel, seed)?;
            Ok(EffectFit {
                method: if ea == EaMode::None {
                    MethodTag::McmNone
                } else {
                    MethodTag::McmTwoStep
                },
                delta: fit.post,
                selected: fit.selected,
                lambda: fit.lambda,
                cv_table: fit.cv_table,
                main,
            })
        }
        EaMode::OneStep => {
            let stacked = concatenate(Axis(1), &[z.view(), mcm.modified.view()])
                .expect("row counts agree");
            // Both block constants (Z's leading 1 and the modified T/2
            // column) stay unpenalized.
            let fit = run_selector(stacked.view(), y, w, clusters, &[0, p], sel, seed)?;
            let delta = Array1::from_iter((0..p).map(|j| fit.post[p + j]));
            let main_coefs = Array1::from_iter((0..p).map(|j| fit.post[j]));
            let selected: Vec<usize> = fit
                .selected
                .iter()
                .filter(|&&j| j >= p)
                .map(|&j| j - p)
                .collect();
            let main_selected: Vec<usize> = fit.selected.iter().filter(|&&j| j < p).copied().collect();
            Ok(EffectFit {
                method: MethodTag::McmOneStep,
                delta,
                selected,
                lambda: fit.lambda,
                cv_table: fit.cv_table,
                main: Some(MainEffectFit {
                    selected: main_selected,
                    coefficients: main_coefs,
                }),
            })
        }
    }
}

/// Modified-outcome transform `y·(D − p̂)/(p̂(1 − p̂))`; its conditional mean
/// given `Z` is the CATE under unconfoundedness and overlap.
pub fn mom_transform(y: &[f64], d: &[bool], phat: &[f64]) -> Result<Vec<f64>> {
    if y.len() != d.len() || phat.len() != d.len() {
        return Err(Error::InvalidArgument("input lengths disagree".into()));
    }
    if let Some((i, p)) = phat.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p < 1.0)) {
        return Err(Error::Validation(format!(
            "propensity score at index {i} is {p}; scores must lie strictly in (0,1)"
        )));
    }
    Ok(y.iter()
        .zip(d)
        .zip(phat)
        .map(|((&yi, &di), &pi)| {
            let dnum = if di { 1.0 } else { 0.0 };
            yi * (dnum - pi) / (pi * (1.0 - pi))
        })
        .collect())
}

/// Sample-normalized variant: `n·T·w̃·y` with the group-normalized weights,
/// which replaces `1/p̂` by its within-group normalized counterpart.
pub fn mom_transform_normalized(y: &[f64], d: &[bool], weights: &WeightVector) -> Vec<f64> {
    let n = y.len() as f64;
    y.iter()
        .zip(d)
        .zip(weights.as_slice())
        .map(|((&yi, &di), &wi)| {
            let t = if di { 1.0 } else { -1.0 };
            n * t * wi * yi
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MomOptions {
    /// Use the group-normalized transform instead of the raw one.
    pub normalized: bool,
}

/// Modified-outcome fit: transform the outcome, then run the selector on
/// the untransformed heterogeneity design without weights (the transform
/// already embeds the inverse-propensity reweighting).
#[allow(clippy::too_many_arguments)]
pub fn fit_mom(
    y: ArrayView1<f64>,
    z: &ArrayView2<f64>,
    d: &[bool],
    clusters: &[usize],
    phat: &[f64],
    weights: &WeightVector,
    sel: &SelectorOptions,
    seed: u64,
    opts: MomOptions,
) -> Result<EffectFit> {
    let y_slice = y
        .as_slice()
        .map(|s| s.to_vec())
        .unwrap_or_else(|| y.iter().copied().collect());
    let y_star = if opts.normalized {
        mom_transform_normalized(&y_slice, d, weights)
    } else {
        mom_transform(&y_slice, d, phat)?
    };
    let y_star = Array1::from(y_star);
    let unit = vec![1.0; z.nrows()];
    let fit = run_selector(z.view(), y_star.view(), &unit, clusters, &[0], sel, seed)?;
    Ok(EffectFit {
        method: MethodTag::Mom,
        delta: fit.post,
        selected: fit.selected,
        lambda: fit.lambda,
        cv_table: fit.cv_table,
        main: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propensity::ipw_weights;
    use crate::stats;
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn transform_rows_hand_checked() {
        let z = array![[1.0, 3.0], [1.0, 3.0]];
        let d = [true, false];
        let m = mcm_transform(&d, &z.view()).unwrap();
        assert_eq!(m.modified.row(0).to_vec(), vec![0.5, 1.5]);
        assert_eq!(m.modified.row(1).to_vec(), vec![-0.5, -1.5]);
        assert_eq!(m.t, vec![1.0, -1.0]);
    }

    #[test]
    fn transform_matches_matrix_identity() {
        // modified = diag(T)·Z/2, checked by enumeration on a random 5×3 Z.
        let mut rng = crate::rng::seeded_rng(12);
        let mut z = Array2::<f64>::ones((5, 3));
        for i in 0..5 {
            for j in 1..3 {
                z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let d = [true, false, false, true, false];
        let m = mcm_transform(&d, &z.view()).unwrap();
        for i in 0..5 {
            let t = if d[i] { 1.0 } else { -1.0 };
            for j in 0..3 {
                assert_eq!(m.modified[(i, j)], t * z[(i, j)] / 2.0);
            }
        }
    }

    fn toy_weighted_sample(
        n: usize,
        seed: u64,
    ) -> (Vec<bool>, Vec<f64>, crate::propensity::WeightVector, Vec<usize>) {
        let mut rng = crate::rng::seeded_rng(seed);
        let d: Vec<bool> = (0..n).map(|i| i % 3 == 0 || rng.gen::<f64>() < 0.2).collect();
        let phat: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..0.8)).collect();
        let w = ipw_weights(&phat, &d).unwrap();
        let clusters: Vec<usize> = (0..n).map(|i| i % 13).collect();
        (d, phat, w, clusters)
    }

    #[test]
    fn constant_only_fit_reproduces_ipw_ate() {
        let n = 500;
        let (d, _phat, w, clusters) = toy_weighted_sample(n, 31);
        let mut rng = crate::rng::seeded_rng(32);
        let y = Array1::from_iter((0..n).map(|i| {
            (if d[i] { 1.3 } else { 0.0 }) + rng.sample::<f64, _>(StandardNormal)
        }));
        let z = Array2::<f64>::ones((n, 1));
        let sel = SelectorOptions {
            selector: Selector::FixedLambda { lambda: 0.0 },
            ..SelectorOptions::default()
        };
        let fit = fit_mcm(y.view(), &z.view(), &d, &clusters, &w, EaMode::None, &sel, 0).unwrap();
        let ate = stats::kahan_sum(
            (0..n).map(|i| {
                let t = if d[i] { 1.0 } else { -1.0 };
                t * w.as_slice()[i] * y[i]
            }),
        );
        assert!(
            (fit.delta[0] - ate).abs() <= 1e-10,
            "delta0 {} vs IPW ATE {ate}",
            fit.delta[0]
        );
    }

    #[test]
    fn one_step_constant_only_matches_none() {
        let n = 400;
        let (d, _phat, w, clusters) = toy_weighted_sample(n, 77);
        let mut rng = crate::rng::seeded_rng(78);
        let y = Array1::from_iter(
            (0..n).map(|i| (if d[i] { -0.8 } else { 0.0 }) + rng.sample::<f64, _>(StandardNormal)),
        );
        let z = Array2::<f64>::ones((n, 1));
        let sel = SelectorOptions {
            selector: Selector::FixedLambda { lambda: 0.0 },
            ..SelectorOptions::default()
        };
        let none = fit_mcm(y.view(), &z.view(), &d, &clusters, &w, EaMode::None, &sel, 0).unwrap();
        let one = fit_mcm(y.view(), &z.view(), &d, &clusters, &w, EaMode::OneStep, &sel, 0).unwrap();
        assert!(
            (none.delta[0] - one.delta[0]).abs() < 1e-8,
            "{} vs {}",
            none.delta[0],
            one.delta[0]
        );
    }

    #[test]
    fn two_step_absorbs_exact_main_effects() {
        let n = 600;
        let (d, _phat, w, clusters) = toy_weighted_sample(n, 55);
        let mut rng = crate::rng::seeded_rng(56);
        let mut z = Array2::<f64>::ones((n, 4));
        for i in 0..n {
            for j in 1..4 {
                z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        // Outcome exactly linear in Z, no treatment effect, no noise.
        let beta = array![0.4, 1.0, -2.0, 0.7];
        let y = z.dot(&beta);
        let (resid, main) = efficiency_augment(
            y.view(),
            &z.view(),
            w.as_slice(),
            &clusters,
            EaMode::TwoStep,
            &SelectorOptions::default(),
            3,
        )
        .unwrap();
        let _ = d;
        let max_resid = resid.iter().map(|r| r.abs()).fold(0.0, f64::max);
        assert!(max_resid < 1e-6, "max residual {max_resid}");
        assert!(main.is_some());
    }

    #[test]
    fn zero_outcome_gives_zero_delta() {
        let n = 200;
        let (d, _phat, w, clusters) = toy_weighted_sample(n, 91);
        let mut rng = crate::rng::seeded_rng(92);
        let mut z = Array2::<f64>::ones((n, 3));
        for i in 0..n {
            for j in 1..3 {
                z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let y = Array1::<f64>::zeros(n);
        let fit = fit_mcm(
            y.view(),
            &z.view(),
            &d,
            &clusters,
            &w,
            EaMode::None,
            &SelectorOptions::default(),
            1,
        )
        .unwrap();
        for j in 0..3 {
            assert_eq!(fit.delta[j], 0.0);
        }
    }

    #[test]
    fn treatment_relabeling_flips_delta_sign() {
        let n = 800;
        let mut rng = crate::rng::seeded_rng(101);
        let d: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < 0.4).collect();
        let phat = vec![0.4; n];
        let clusters: Vec<usize> = (0..n).map(|i| i % 10).collect();
        let mut z = Array2::<f64>::ones((n, 3));
        for i in 0..n {
            for j in 1..3 {
                z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let y = Array1::from_iter((0..n).map(|i| {
            let tau = 1.0 + 0.5 * z[(i, 1)];
            (if d[i] { tau } else { 0.0 }) + 0.3 * rng.sample::<f64, _>(StandardNormal)
        }));
        let sel = SelectorOptions {
            selector: Selector::FixedLambda { lambda: 0.0 },
            ..SelectorOptions::default()
        };
        let w = ipw_weights(&phat, &d).unwrap();
        let fit = fit_mcm(y.view(), &z.view(), &d, &clusters, &w, EaMode::None, &sel, 0).unwrap();

        let d_flip: Vec<bool> = d.iter().map(|&t| !t).collect();
        let phat_flip: Vec<f64> = phat.iter().map(|&p| 1.0 - p).collect();
        let w_flip = ipw_weights(&phat_flip, &d_flip).unwrap();
        let flip = fit_mcm(
            y.view(),
            &z.view(),
            &d_flip,
            &clusters,
            &w_flip,
            EaMode::None,
            &sel,
            0,
        )
        .unwrap();
        for j in 0..3 {
            assert!(
                (fit.delta[j] + flip.delta[j]).abs() < 1e-8,
                "column {j}: {} vs {}",
                fit.delta[j],
                flip.delta[j]
            );
        }
    }

    #[test]
    fn mom_transform_hand_values() {
        let y = [2.0, 2.0, 0.0];
        let d = [true, false, true];
        let p = [0.5, 0.5, 0.3];
        let out = mom_transform(&y, &d, &p).unwrap();
        assert_eq!(out[0], 4.0);
        assert_eq!(out[1], -4.0);
        assert_eq!(out[2], 0.0);
        assert!(mom_transform(&y, &d, &[0.5, 1.0, 0.5]).is_err());
    }

    #[test]
    fn homogeneous_effect_concentrates_on_constant() {
        // Randomized design with constant effect: delta_0 -> tau and the
        // non-constant coefficients vanish.
        let n = 20_000;
        let tau = -0.9;
        let mut rng = crate::rng::seeded_rng(2024);
        let d: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < 0.5).collect();
        let phat = vec![0.5; n];
        let clusters: Vec<usize> = (0..n).map(|i| i % 40).collect();
        let mut z = Array2::<f64>::ones((n, 5));
        for i in 0..n {
            for j in 1..5 {
                z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let y = Array1::from_iter((0..n).map(|i| {
            0.5 + 0.8 * z[(i, 1)]
                + (if d[i] { tau } else { 0.0 })
                + rng.sample::<f64, _>(StandardNormal)
        }));
        let w = ipw_weights(&phat, &d).unwrap();
        let sel = SelectorOptions {
            n_lambda: 40,
            ..SelectorOptions::default()
        };
        let fit =
            fit_mcm(y.view(), &z.view(), &d, &clusters, &w, EaMode::None, &sel, 5).unwrap();
        // Roughly 3 standard errors of the constant-only estimator.
        assert!((fit.delta[0] - tau).abs() < 0.045, "delta0 {}", fit.delta[0]);
        for j in 1..5 {
            assert!(fit.delta[j].abs() < 0.05, "delta_{j} = {}", fit.delta[j]);
        }
    }

    #[test]
    fn oracle_cate_recovery_and_mom_agreement() {
        // Randomized design, heterogeneous linear effect: the fitted CATEs
        // track the truth, and MOM CATEs correlate with MCM CATEs.
        let n = 20_000;
        let mut rng = crate::rng::seeded_rng(730);
        let d: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < 0.5).collect();
        let phat = vec![0.5; n];
        let clusters: Vec<usize> = (0..n).map(|i| i % 50).collect();
        let p = 6;
        let mut z = Array2::<f64>::ones((n, p));
        for i in 0..n {
            for j in 1..p {
                z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let delta = array![-0.5, 0.6, -0.6, 0.4, 0.0, 0.0];
        let tau = z.dot(&delta);
        let y = Array1::from_iter((0..n).map(|i| {
            1.0 + 0.5 * z[(i, 1)]
                + (if d[i] { tau[i] } else { 0.0 })
                + rng.sample::<f64, _>(StandardNormal)
        }));
        let w = ipw_weights(&phat, &d).unwrap();
        let sel = SelectorOptions {
            n_lambda: 40,
            ..SelectorOptions::default()
        };
        let mcm = fit_mcm(y.view(), &z.view(), &d, &clusters, &w, EaMode::None, &sel, 7).unwrap();
        let gamma = mcm.predict(&z.view());
        let r = stats::pearson(gamma.as_slice().unwrap(), tau.as_slice().unwrap()).unwrap();
        assert!(r >= 0.9, "correlation with truth {r}");

        let mom = fit_mom(
            y.view(),
            &z.view(),
            &d,
            &clusters,
            &phat,
            &w,
            &sel,
            7,
            MomOptions::default(),
        )
        .unwrap();
        let gamma_mom = mom.predict(&z.view());
        let r_mm =
            stats::pearson(gamma.as_slice().unwrap(), gamma_mom.as_slice().unwrap()).unwrap();
        assert!(r_mm > 0.5, "MCM/MOM correlation {r_mm}");
    }
}
