//! Split-sample estimation of CATEs: weights once, then repeated honest
//! splits, selection on the training half, unpenalized re-estimation on the
//! estimation half, full-sample prediction, and bagging across splits.
//!
//! Selection never sees estimation-half outcomes, and the frozen selected
//! sets recorded per split are what the variance bootstrap re-estimates.

use crate::data::Dataset;
use crate::effects::{fit_mcm, fit_mom, mcm_transform, mom_transform, mom_transform_normalized, EaMode, MomOptions, SelectorOptions};
use crate::error::{Error, Result};
use crate::propensity::{
    fit_logit, ipw_weights, renormalize_within_groups, trim_common_support, LogitOptions,
    PropensityModel, TrimReport, WeightVector,
};
use crate::rng::{derive_seed, seeded_rng};
use crate::solvers::post_lasso_refit;
use crate::stats;
use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A variable selection frozen after the training-half fit; refits estimate
/// only coefficients, never membership.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "design")]
pub enum FrozenSelection {
    /// Modified-covariate design; `selected` holds non-constant
    /// heterogeneity columns.
    Plain { selected: Vec<usize> },
    /// Stacked `[Z | T·Z/2]` design; `selected` holds stacked design
    /// columns (main block `0..p`, interaction block `p..2p`).
    Stacked { selected: Vec<usize> },
    /// Two-step: main-effect columns refit on `Z` first, then the
    /// modified-covariate refit on the residualized outcome.
    TwoStep {
        main_selected: Vec<usize>,
        selected: Vec<usize>,
    },
    /// Modified-outcome regression on `Z` (re-estimated inline by
    /// [`run_split`]; the variance bootstrap covers the modified-covariate
    /// designs only).
    Outcome { selected: Vec<usize> },
}

/// Coefficient re-estimation result for a frozen selection.
#[derive(Clone, Debug)]
pub struct RefitOutcome {
    /// Effect coefficients over heterogeneity columns.
    pub delta: Array1<f64>,
    /// Design columns dropped as rank-deficient during the refit.
    pub dropped: Vec<usize>,
}

impl FrozenSelection {
    /// Re-estimate coefficients on the given rows with the given weights.
    pub fn refit(
        &self,
        y: ArrayView1<f64>,
        z: &ArrayView2<f64>,
        d: &[bool],
        weights: &[f64],
    ) -> Result<RefitOutcome> {
        let p = z.ncols();
        match self {
            FrozenSelection::Plain { selected } => {
                let mcm = mcm_transform(d, z)?;
                let (coefs, dropped) =
                    post_lasso_refit(mcm.modified.view(), y, weights, selected, &[0])?;
                Ok(RefitOutcome { delta: coefs, dropped })
            }
            FrozenSelection::Stacked { selected } => {
                let mcm = mcm_transform(d, z)?;
                let stacked = concatenate(Axis(1), &[z.view(), mcm.modified.view()])
                    .expect("row counts agree");
                let (coefs, dropped) =
                    post_lasso_refit(stacked.view(), y, weights, selected, &[0, p])?;
                let delta = Array1::from_iter((0..p).map(|j| coefs[p + j]));
                Ok(RefitOutcome { delta, dropped })
            }
            FrozenSelection::TwoStep {
                main_selected,
                selected,
            } => {
                let (main, mut dropped) = post_lasso_refit(z.view(), y, weights, main_selected, &[0])?;
                let resid = &y.to_owned() - &z.dot(&main);
                let mcm = mcm_transform(d, z)?;
                let (coefs, dropped_cate) =
                    post_lasso_refit(mcm.modified.view(), resid.view(), weights, selected, &[0])?;
                dropped.extend(dropped_cate);
                Ok(RefitOutcome { delta: coefs, dropped })
            }
            FrozenSelection::Outcome { .. } => Err(Error::InvalidArgument(
                "the variance bootstrap re-estimates modified-covariate designs only".into(),
            )),
        }
    }
}

/// One honest split: selection on `train`, coefficients from `estimation`,
/// predictions for the full sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitResult {
    pub split_index: usize,
    pub train: Vec<usize>,
    pub estimation: Vec<usize>,
    pub frozen: FrozenSelection,
    /// Non-constant heterogeneity columns selected in the training half.
    pub selected_heterogeneity: Vec<usize>,
    pub lambda: Option<f64>,
    /// Penalty-selection table from the training half (absent for fixed
    /// penalties).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_table: Option<Vec<crate::solvers::CvRow>>,
    /// Estimation-half coefficients over heterogeneity columns.
    pub delta: Vec<f64>,
    /// Full-sample predictions `z_i·delta`.
    pub predictions: Vec<f64>,
    /// Design columns dropped as rank-deficient in the estimation refit.
    pub dropped_in_refit: Vec<usize>,
}

/// Per-split predictions with their bagged average.
#[derive(Clone, Debug)]
pub struct CateEnsemble {
    /// S×N matrix of per-split predictions.
    pub predictions: Array2<f64>,
    /// Per-observation average over splits.
    pub bagged: Vec<f64>,
    pub n_splits: usize,
    pub selected_sets: Vec<Vec<usize>>,
}

/// Cluster-respecting random halving: whole clusters are assigned to the
/// side with fewer observations so far (coin flip on ties), after a seeded
/// shuffle of cluster order. The imbalance is bounded by the largest
/// cluster's share.
pub fn honest_split(
    n: usize,
    cluster_index: &[usize],
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if cluster_index.len() != n || n < 2 {
        return Err(Error::InvalidArgument("need at least two observations".into()));
    }
    let mut members: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for (i, &c) in cluster_index.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::Degenerate(
            "honest splitting needs at least two clusters".into(),
        ));
    }
    let mut order: Vec<usize> = members.keys().copied().collect();
    let mut rng = seeded_rng(seed);
    order.shuffle(&mut rng);

    let mut train: Vec<usize> = Vec::new();
    let mut estimation: Vec<usize> = Vec::new();
    for c in order {
        let rows = &members[&c];
        let to_train = match train.len().cmp(&estimation.len()) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => rng.gen::<bool>(),
        };
        if to_train {
            train.extend(rows);
        } else {
            estimation.extend(rows);
        }
    }
    train.sort_unstable();
    estimation.sort_unstable();
    Ok((train, estimation))
}

/// Which effect regression each split runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PipelineMethod {
    Mcm(EaMode),
    Mom { normalized: bool },
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub n_splits: usize,
    pub method: PipelineMethod,
    pub selector: SelectorOptions,
    /// Re-normalize subset weights to sum to one per treatment group before
    /// selection and refit (keeps the weighting contract on subsamples).
    pub renormalize_half_weights: bool,
    /// Sensitivity mode: re-estimate the propensity on each training half.
    pub reestimate_weights_per_split: bool,
    /// Which outcome column drives the fit.
    pub outcome_col: usize,
    pub master_seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            n_splits: 30,
            method: PipelineMethod::Mcm(EaMode::default()),
            selector: SelectorOptions::default(),
            renormalize_half_weights: true,
            reestimate_weights_per_split: false,
            outcome_col: 0,
            master_seed: 0,
        }
    }
}

fn subset_weights(weights: &[f64], rows: &[usize], d: &[bool], renormalize: bool) -> Vec<f64> {
    let sub: Vec<f64> = rows.iter().map(|&i| weights[i]).collect();
    if renormalize {
        let d_sub: Vec<bool> = rows.iter().map(|&i| d[i]).collect();
        renormalize_within_groups(&sub, &d_sub)
    } else {
        sub
    }
}

fn take_rows(m: &ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((rows.len(), m.ncols()));
    for (r, &i) in rows.iter().enumerate() {
        for c in 0..m.ncols() {
            out[(r, c)] = m[(i, c)];
        }
    }
    out
}

/// Run one honest split: select on the training half, re-estimate on the
/// estimation half, predict for the full sample. `phat` must align with the
/// dataset rows (the modified-outcome method transforms with it).
pub fn run_split(
    dataset: &Dataset,
    phat: &[f64],
    weights: &WeightVector,
    opts: &PipelineOptions,
    split_index: usize,
) -> Result<SplitResult> {
    let n = dataset.n();
    if phat.len() != n {
        return Err(Error::InvalidArgument("propensity length mismatch".into()));
    }
    let d = dataset.treatment();
    let z = dataset.heterogeneity();
    let y = dataset.outcome(opts.outcome_col);
    let split_seed = derive_seed(opts.master_seed, "split", split_index as u64);
    let (train, estimation) = honest_split(
        n,
        dataset.cluster_index(),
        derive_seed(split_seed, "halving", 0),
    )?;

    // Weight base: the full-sample weights, or a per-split re-estimate for
    // sensitivity runs (propensity refit on the training half, predicted
    // for everyone, normalized over the full sample).
    let (base_phat, base_weights): (Vec<f64>, Vec<f64>) = if opts.reestimate_weights_per_split {
        let x_train = take_rows(&dataset.confounders().view(), &train);
        let d_train: Vec<bool> = train.iter().map(|&i| d[i]).collect();
        let model = fit_logit(&x_train.view(), &d_train, &LogitOptions::default())?;
        let phat_all = model.predict(&dataset.confounders().view());
        let w = ipw_weights(phat_all.as_slice().unwrap(), d)?;
        (phat_all.to_vec(), w.as_slice().to_vec())
    } else {
        (phat.to_vec(), weights.as_slice().to_vec())
    };

    // Selection on the training half.
    let y_train = Array1::from_iter(train.iter().map(|&i| y[i]));
    let z_train = take_rows(&z.view(), &train);
    let d_train: Vec<bool> = train.iter().map(|&i| d[i]).collect();
    let cl_train: Vec<usize> = train.iter().map(|&i| dataset.cluster_index()[i]).collect();
    let w_train = WeightVector::new_unchecked(subset_weights(
        &base_weights,
        &train,
        d,
        opts.renormalize_half_weights,
    ));
    let selector_seed = derive_seed(split_seed, "selector", 0);

    let (frozen, selected_heterogeneity, lambda, cv_table) = match opts.method {
        PipelineMethod::Mcm(ea) => {
            let fit = fit_mcm(
                y_train.view(),
                &z_train.view(),
                &d_train,
                &cl_train,
                &w_train,
                ea,
                &opts.selector,
                selector_seed,
            )?;
            let p = z.ncols();
            let frozen = match ea {
                EaMode::None => FrozenSelection::Plain {
                    selected: fit.selected.clone(),
                },
                EaMode::TwoStep => FrozenSelection::TwoStep {
                    main_selected: fit
                        .main
                        .as_ref()
                        .map(|m| m.selected.clone())
                        .unwrap_or_default(),
                    selected: fit.selected.clone(),
                },
                EaMode::OneStep => {
                    let mut cols: Vec<usize> = fit
                        .main
                        .as_ref()
                        .map(|m| m.selected.clone())
                        .unwrap_or_default();
                    cols.extend(fit.selected.iter().map(|&j| j + p));
                    cols.sort_unstable();
                    FrozenSelection::Stacked { selected: cols }
                }
            };
            (frozen, fit.selected, fit.lambda, fit.cv_table)
        }
        PipelineMethod::Mom { normalized } => {
            let phat_train: Vec<f64> = train.iter().map(|&i| base_phat[i]).collect();
            let fit = fit_mom(
                y_train.view(),
                &z_train.view(),
                &d_train,
                &cl_train,
                &phat_train,
                &w_train,
                &opts.selector,
                selector_seed,
                MomOptions { normalized },
            )?;
            (
                FrozenSelection::Outcome {
                    selected: fit.selected.clone(),
                },
                fit.selected,
                fit.lambda,
                fit.cv_table,
            )
        }
    };

    // Unpenalized re-estimation on the estimation half.
    let y_est = Array1::from_iter(estimation.iter().map(|&i| y[i]));
    let z_est = take_rows(&z.view(), &estimation);
    let d_est: Vec<bool> = estimation.iter().map(|&i| d[i]).collect();
    let w_est = subset_weights(&base_weights, &estimation, d, opts.renormalize_half_weights);
    let refit = match (&frozen, opts.method) {
        (FrozenSelection::Outcome { selected }, PipelineMethod::Mom { normalized }) => {
            let phat_est: Vec<f64> = estimation.iter().map(|&i| base_phat[i]).collect();
            let y_slice: Vec<f64> = y_est.to_vec();
            let y_star = if normalized {
                mom_transform_normalized(
                    &y_slice,
                    &d_est,
                    &WeightVector::new_unchecked(w_est.clone()),
                )
            } else {
                mom_transform(&y_slice, &d_est, &phat_est)?
            };
            let unit = vec![1.0; estimation.len()];
            let (coefs, dropped) = post_lasso_refit(
                z_est.view(),
                Array1::from(y_star).view(),
                &unit,
                selected,
                &[0],
            )?;
            RefitOutcome {
                delta: coefs,
                dropped,
            }
        }
        _ => frozen.refit(y_est.view(), &z_est.view(), &d_est, &w_est)?,
    };

    let predictions = z.dot(&refit.delta);
    Ok(SplitResult {
        split_index,
        train,
        estimation,
        frozen,
        selected_heterogeneity,
        lambda,
        cv_table,
        delta: refit.delta.to_vec(),
        predictions: predictions.to_vec(),
        dropped_in_refit: refit.dropped,
    })
}

/// Average per-split predictions into the bagged CATE vector.
pub fn bag_cates(splits: &[SplitResult]) -> Result<CateEnsemble> {
    if splits.is_empty() {
        return Err(Error::InvalidArgument("no splits to aggregate".into()));
    }
    let n = splits[0].predictions.len();
    if splits.iter().any(|s| s.predictions.len() != n) {
        return Err(Error::InvalidArgument(
            "splits cover different observation sets".into(),
        ));
    }
    let s_count = splits.len();
    let mut predictions = Array2::<f64>::zeros((s_count, n));
    for (r, split) in splits.iter().enumerate() {
        for (c, &v) in split.predictions.iter().enumerate() {
            predictions[(r, c)] = v;
        }
    }
    let bagged: Vec<f64> = (0..n)
        .map(|i| predictions.column(i).sum() / s_count as f64)
        .collect();
    Ok(CateEnsemble {
        predictions,
        bagged,
        n_splits: s_count,
        selected_sets: splits.iter().map(|s| s.selected_heterogeneity.clone()).collect(),
    })
}

/// Mean of the bagged CATEs over the rows flagged by `group`.
pub fn group_average(bagged: &[f64], group: &[bool]) -> Result<f64> {
    if bagged.len() != group.len() {
        return Err(Error::InvalidArgument("group flag length mismatch".into()));
    }
    let count = group.iter().filter(|&&g| g).count();
    if count == 0 {
        return Err(Error::Degenerate("empty group".into()));
    }
    let sum = stats::kahan_sum(
        bagged
            .iter()
            .zip(group)
            .filter(|(_, &g)| g)
            .map(|(&v, _)| v),
    );
    Ok(sum / count as f64)
}

/// Run all splits (in parallel, merged by split index) and bag them.
pub fn run_pipeline(
    dataset: &Dataset,
    phat: &[f64],
    weights: &WeightVector,
    opts: &PipelineOptions,
) -> Result<(Vec<SplitResult>, CateEnsemble)> {
    if opts.n_splits == 0 {
        return Err(Error::InvalidArgument("need at least one split".into()));
    }
    if opts.outcome_col >= dataset.n_outcomes() {
        return Err(Error::InvalidArgument("outcome column out of range".into()));
    }
    let splits: Vec<SplitResult> = (0..opts.n_splits)
        .into_par_iter()
        .map(|s| run_split(dataset, phat, weights, opts, s))
        .collect::<Result<Vec<_>>>()?;
    let ensemble = bag_cates(&splits)?;
    Ok((splits, ensemble))
}

/// Propensity, common-support trimming, and weights for a dataset — the
/// preparation step that precedes splitting.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    /// The (possibly trimmed) analysis sample.
    pub dataset: Dataset,
    /// Propensity scores aligned with `dataset`.
    pub phat: Vec<f64>,
    pub weights: WeightVector,
    pub trim: Option<TrimReport>,
    pub model: PropensityModel,
}

/// Fit the participation model (on confounders alone, or jointly with the
/// non-constant heterogeneity columns), optionally trim to common support,
/// and build the normalized weights.
pub fn prepare(
    dataset: &Dataset,
    include_heterogeneity_in_propensity: bool,
    trim: bool,
    logit: &LogitOptions,
) -> Result<PreparedSample> {
    let x = if include_heterogeneity_in_propensity {
        let z = dataset.heterogeneity();
        let z_nonconst = z.slice(ndarray::s![.., 1..]);
        concatenate(Axis(1), &[dataset.confounders().view(), z_nonconst]).expect("rows agree")
    } else {
        dataset.confounders().clone()
    };
    let model = fit_logit(&x.view(), dataset.treatment(), logit)?;
    let phat_all = model.predict(&x.view());

    if trim {
        let result = trim_common_support(phat_all.as_slice().unwrap(), dataset.treatment())?;
        let trimmed = dataset.subset(&result.retained)?;
        let phat: Vec<f64> = result.retained.iter().map(|&i| phat_all[i]).collect();
        let weights = ipw_weights(&phat, trimmed.treatment())?;
        Ok(PreparedSample {
            dataset: trimmed,
            phat,
            weights,
            trim: Some(result.report),
            model,
        })
    } else {
        let phat = phat_all.to_vec();
        let weights = ipw_weights(&phat, dataset.treatment())?;
        Ok(PreparedSample {
            dataset: dataset.clone(),
            phat,
            weights,
            trim: None,
            model,
        })
    }
}
