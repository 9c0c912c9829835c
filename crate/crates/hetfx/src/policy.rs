//! Quota-constrained assignment rules over bagged CATEs and their
//! evaluation. Every rule returns exactly `quota` participants; the mean
//! CATE of the selected set is the hypothetical effect on the treated under
//! that rule.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::{bootstrap_cate_statistic, BootstrapConfig};
use crate::pipeline::SplitResult;
use crate::propensity::WeightVector;
use crate::rng::seeded_rng;
use crate::stats;
use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub enum RuleKind {
    /// The realized participant set; its size must equal the quota.
    Observed,
    /// Uniform draw without replacement.
    Random,
    /// The quota-many largest CATEs (ties by ascending observation id).
    BestCase,
    /// The quota-many smallest CATEs (ties by ascending observation id).
    WorstCase,
    /// Everyone in the primary group, topped up by a random draw from the
    /// fill group, then from the remainder. An oversized primary group is
    /// truncated by a random draw.
    PredicateWithFill { primary: Vec<bool>, fill: Vec<bool> },
}

#[derive(Clone, Debug)]
pub struct PolicyRule {
    pub label: String,
    pub kind: RuleKind,
    pub quota: usize,
    pub seed: u64,
}

/// Indices (ascending) of the participants selected by the rule.
pub fn select_participants(
    rule: &PolicyRule,
    gamma_bar: &[f64],
    treatment: &[bool],
    obs_ids: &[u64],
) -> Result<Vec<usize>> {
    let n = gamma_bar.len();
    if treatment.len() != n || obs_ids.len() != n {
        return Err(Error::InvalidArgument("input lengths disagree".into()));
    }
    if rule.quota == 0 || rule.quota > n {
        return Err(Error::InvalidArgument(format!(
            "quota {} infeasible for {n} observations",
            rule.quota
        )));
    }

    let mut selection: Vec<usize> = match &rule.kind {
        RuleKind::Observed => {
            let treated: Vec<usize> = (0..n).filter(|&i| treatment[i]).collect();
            if treated.len() != rule.quota {
                return Err(Error::InvalidArgument(format!(
                    "observed participant count {} does not match the quota {}",
                    treated.len(),
                    rule.quota
                )));
            }
            treated
        }
        RuleKind::Random => {
            let mut rng = seeded_rng(rule.seed);
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            all.truncate(rule.quota);
            all
        }
        RuleKind::BestCase => ranked(gamma_bar, obs_ids, rule.quota, true),
        RuleKind::WorstCase => ranked(gamma_bar, obs_ids, rule.quota, false),
        RuleKind::PredicateWithFill { primary, fill } => {
            if primary.len() != n || fill.len() != n {
                return Err(Error::InvalidArgument("predicate flag length mismatch".into()));
            }
            if primary.iter().zip(fill).any(|(&a, &b)| a && b) {
                return Err(Error::InvalidArgument(
                    "predicate groups must be disjoint".into(),
                ));
            }
            let mut rng = seeded_rng(rule.seed);
            let mut primary_idx: Vec<usize> = (0..n).filter(|&i| primary[i]).collect();
            let mut chosen: Vec<usize> = if primary_idx.len() > rule.quota {
                primary_idx.shuffle(&mut rng);
                primary_idx.truncate(rule.quota);
                primary_idx
            } else {
                primary_idx
            };
            if chosen.len() < rule.quota {
                let mut fill_idx: Vec<usize> =
                    (0..n).filter(|&i| fill[i] && !primary[i]).collect();
                fill_idx.shuffle(&mut rng);
                for i in fill_idx {
                    if chosen.len() == rule.quota {
                        break;
                    }
                    chosen.push(i);
                }
            }
            if chosen.len() < rule.quota {
                let in_chosen: std::collections::HashSet<usize> = chosen.iter().copied().collect();
                let mut rest: Vec<usize> = (0..n).filter(|i| !in_chosen.contains(i)).collect();
                rest.shuffle(&mut rng);
                for i in rest {
                    if chosen.len() == rule.quota {
                        break;
                    }
                    chosen.push(i);
                }
            }
            chosen
        }
    };
    selection.sort_unstable();
    debug_assert_eq!(selection.len(), rule.quota);
    Ok(selection)
}

fn ranked(gamma_bar: &[f64], obs_ids: &[u64], quota: usize, descending: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gamma_bar.len()).collect();
    order.sort_by(|&a, &b| {
        let cmp = gamma_bar[a]
            .partial_cmp(&gamma_bar[b])
            .expect("non-finite CATE");
        let cmp = if descending { cmp.reverse() } else { cmp };
        cmp.then(obs_ids[a].cmp(&obs_ids[b]))
    });
    order.truncate(quota);
    order
}

/// Mean CATE of the selected participants — the hypothetical effect on the
/// treated under this assignment.
pub fn evaluate_rule(selection: &[usize], gamma_bar: &[f64]) -> Result<f64> {
    if selection.is_empty() {
        return Err(Error::Degenerate("empty selection".into()));
    }
    let sum = stats::kahan_sum(selection.iter().map(|&i| gamma_bar[i]));
    Ok(sum / selection.len() as f64)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignProfileRow {
    pub name: String,
    pub mean_positive: Option<f64>,
    pub mean_negative: Option<f64>,
    pub difference: Option<f64>,
    pub se: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignProfile {
    pub rows: Vec<SignProfileRow>,
    pub n_positive: usize,
    pub n_negative: usize,
    /// Set when one sign group is empty (profile emitted without SEs).
    pub empty_side: Option<String>,
}

/// Everything the frozen-selection bootstrap needs, bundled for reports
/// that attach standard errors to functions of the bagged CATEs.
pub struct CateBootstrapContext<'a> {
    pub dataset: &'a Dataset,
    pub weights: &'a WeightVector,
    pub splits: &'a [SplitResult],
    pub outcome_col: usize,
    pub config: BootstrapConfig,
}

/// Mean characteristics of observations with nonnegative versus negative
/// bagged CATEs. With a bootstrap context, the difference's standard error
/// re-forms the sign groups inside every replication; replications where a
/// side is empty are skipped for that row.
pub fn sign_group_profile(
    gamma_bar: &[f64],
    characteristics: &Array2<f64>,
    names: &[String],
    bootstrap: Option<&CateBootstrapContext>,
) -> Result<SignProfile> {
    let n = gamma_bar.len();
    if characteristics.nrows() != n || names.len() != characteristics.ncols() {
        return Err(Error::InvalidArgument("characteristic shape mismatch".into()));
    }
    let positive: Vec<bool> = gamma_bar.iter().map(|&g| g >= 0.0).collect();
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = n - n_pos;

    let group_mean = |col: usize, side: bool| -> Option<f64> {
        let vals: Vec<f64> = (0..n)
            .filter(|&i| positive[i] == side)
            .map(|i| characteristics[(i, col)])
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(stats::mean(&vals))
        }
    };

    let empty_side = if n_pos == 0 {
        Some("positive".to_string())
    } else if n_neg == 0 {
        Some("negative".to_string())
    } else {
        None
    };

    let ses: Option<Vec<f64>> = match (empty_side.is_none(), bootstrap) {
        (true, Some(ctx)) => {
            let chars = characteristics.clone();
            let out = bootstrap_cate_statistic(
                ctx.dataset,
                ctx.weights,
                ctx.splits,
                ctx.outcome_col,
                &ctx.config,
                names.len(),
                move |gamma_b, k| {
                    // Re-form the sign groups inside the replication and
                    // average over the resampled observations (draw
                    // multiplicities as frequency weights), so the standard
                    // error carries group-composition variability.
                    let mut pos_sum = vec![0.0f64; chars.ncols()];
                    let mut neg_sum = vec![0.0f64; chars.ncols()];
                    let mut pos_n = 0.0f64;
                    let mut neg_n = 0.0f64;
                    for i in 0..gamma_b.len() {
                        let ki = k[i] as f64;
                        if ki == 0.0 {
                            continue;
                        }
                        if gamma_b[i] >= 0.0 {
                            pos_n += ki;
                            for c in 0..chars.ncols() {
                                pos_sum[c] += ki * chars[(i, c)];
                            }
                        } else {
                            neg_n += ki;
                            for c in 0..chars.ncols() {
                                neg_sum[c] += ki * chars[(i, c)];
                            }
                        }
                    }
                    (0..chars.ncols())
                        .map(|c| {
                            if pos_n == 0.0 || neg_n == 0.0 {
                                f64::NAN
                            } else {
                                pos_sum[c] / pos_n - neg_sum[c] / neg_n
                            }
                        })
                        .collect()
                },
            )?;
            Some(out.se)
        }
        _ => None,
    };

    let rows: Vec<SignProfileRow> = names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let mp = group_mean(c, true);
            let mn = group_mean(c, false);
            SignProfileRow {
                name: name.clone(),
                mean_positive: mp,
                mean_negative: mn,
                difference: match (mp, mn) {
                    (Some(a), Some(b)) => Some(a - b),
                    _ => None,
                },
                se: ses.as_ref().map(|s| s[c]),
            }
        })
        .collect();

    Ok(SignProfile {
        rows,
        n_positive: n_pos,
        n_negative: n_neg,
        empty_side,
    })
}
