//! Average-effect estimators and clustered bootstrap standard errors.
//!
//! Two bootstrap modes exist. The CATE bootstrap keeps each split's selected
//! variables frozen: every replication draws whole clusters with
//! replacement, intersects the draw with each split's original estimation
//! sample (an observation drawn k times enters with multiplicity k),
//! re-estimates only the frozen coefficients, and recomputes the bagged
//! predictions; the reported standard error is the population standard
//! deviation over replications (divisor B). The average-effects bootstrap
//! re-estimates the propensity and weights inside each replication.
//!
//! Replications are processed in fixed-size blocks merged in block order,
//! so results are bit-identical regardless of worker count.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::SplitResult;
use crate::propensity::{fit_logit, ipw_weights, LogitOptions, WeightVector};
use crate::rng::stream_rng;
use crate::stats::{self, VectorVariance};
use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimand {
    Ate,
    Atet,
    Atent,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub estimand: Estimand,
    pub value: f64,
    pub se: Option<f64>,
    pub replications: Option<usize>,
}

/// Point estimates of the three average effects.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AverageEffects {
    pub ate: f64,
    pub atet: f64,
    pub atent: f64,
}

/// ATE from the group-normalized weights; ATET/ATENT by normalized odds
/// reweighting of the opposite group.
pub fn estimate_averages(
    y: &[f64],
    d: &[bool],
    phat: &[f64],
    weights: &WeightVector,
) -> Result<AverageEffects> {
    let n = y.len();
    if d.len() != n || phat.len() != n || weights.len() != n {
        return Err(Error::InvalidArgument("input lengths disagree".into()));
    }
    let treated: Vec<usize> = (0..n).filter(|&i| d[i]).collect();
    let controls: Vec<usize> = (0..n).filter(|&i| !d[i]).collect();
    if treated.is_empty() || controls.is_empty() {
        return Err(Error::Degenerate("both treatment groups must be non-empty".into()));
    }
    let w = weights.as_slice();

    let ate = stats::kahan_sum(treated.iter().map(|&i| w[i] * y[i]))
        - stats::kahan_sum(controls.iter().map(|&i| w[i] * y[i]));

    // ATET: raw treated mean minus odds-reweighted controls.
    let treated_mean =
        stats::kahan_sum(treated.iter().map(|&i| y[i])) / treated.len() as f64;
    let odds_c: Vec<f64> = controls.iter().map(|&i| phat[i] / (1.0 - phat[i])).collect();
    let odds_c_sum = stats::kahan_sum(odds_c.iter().copied());
    let atet = treated_mean
        - stats::kahan_sum(
            controls
                .iter()
                .zip(&odds_c)
                .map(|(&i, &q)| q / odds_c_sum * y[i]),
        );

    // ATENT: odds-reweighted treated minus raw control mean.
    let control_mean =
        stats::kahan_sum(controls.iter().map(|&i| y[i])) / controls.len() as f64;
    let odds_t: Vec<f64> = treated.iter().map(|&i| (1.0 - phat[i]) / phat[i]).collect();
    let odds_t_sum = stats::kahan_sum(odds_t.iter().copied());
    let atent = stats::kahan_sum(
        treated
            .iter()
            .zip(&odds_t)
            .map(|(&i, &r)| r / odds_t_sum * y[i]),
    ) - control_mean;

    Ok(AverageEffects { ate, atet, atent })
}

/// Per-outcome-column effects and weighted potential-outcome levels.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonthEffects {
    pub column: usize,
    pub ate: f64,
    pub atet: f64,
    pub atent: f64,
    /// Weighted treated / control outcome levels under the ATE weights.
    pub level_treated: f64,
    pub level_control: f64,
    /// Treated-population analogues: raw treated mean and odds-reweighted
    /// control mean.
    pub atet_level_treated: f64,
    pub atet_level_control: f64,
}

/// Apply [`estimate_averages`] to every outcome column and report the
/// weighted levels behind each contrast.
pub fn monthly_effect_curve(
    outcomes: &Array2<f64>,
    d: &[bool],
    phat: &[f64],
    weights: &WeightVector,
) -> Result<Vec<MonthEffects>> {
    let n = outcomes.nrows();
    if d.len() != n {
        return Err(Error::InvalidArgument("treatment length mismatch".into()));
    }
    let w = weights.as_slice();
    let mut out = Vec::with_capacity(outcomes.ncols());
    for col in 0..outcomes.ncols() {
        let y: Vec<f64> = (0..n).map(|i| outcomes[(i, col)]).collect();
        let effects = estimate_averages(&y, d, phat, weights)?;
        let treated: Vec<usize> = (0..n).filter(|&i| d[i]).collect();
        let controls: Vec<usize> = (0..n).filter(|&i| !d[i]).collect();
        let level_treated = stats::kahan_sum(treated.iter().map(|&i| w[i] * y[i]));
        let level_control = stats::kahan_sum(controls.iter().map(|&i| w[i] * y[i]));
        let atet_level_treated =
            stats::kahan_sum(treated.iter().map(|&i| y[i])) / treated.len() as f64;
        out.push(MonthEffects {
            column: col,
            ate: effects.ate,
            atet: effects.atet,
            atent: effects.atent,
            level_treated,
            level_control,
            atet_level_treated,
            atet_level_control: atet_level_treated - effects.atet,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub seed: u64,
    /// Hard-error threshold on the share of excluded replications.
    pub max_exclusion_share: f64,
}

impl BootstrapConfig {
    pub fn new(replications: usize, seed: u64) -> Result<Self> {
        if replications < 2 {
            return Err(Error::InvalidArgument("bootstrap needs at least 2 replications".into()));
        }
        Ok(Self {
            replications,
            seed,
            max_exclusion_share: 0.05,
        })
    }
}

/// Replications per reduction block; fixed so that reductions merge in a
/// worker-count-independent order.
const BOOTSTRAP_BLOCK: usize = 32;

/// Draw `n_clusters` cluster ids with replacement and return per-cluster
/// draw counts.
fn draw_cluster_counts<R: Rng>(n_clusters: usize, rng: &mut R) -> Vec<u32> {
    let mut counts = vec![0u32; n_clusters];
    for _ in 0..n_clusters {
        counts[rng.gen_range(0..n_clusters)] += 1;
    }
    counts
}

fn observation_multiplicities(cluster_index: &[usize], counts: &[u32]) -> Vec<u32> {
    cluster_index.iter().map(|&c| counts[c]).collect()
}

/// Generic engine: per replication, re-estimate every split's frozen
/// coefficients on the cluster resample aligned with that split's
/// estimation sample, aggregate predictions across splits, evaluate the
/// statistic, and accumulate its per-component variance. The statistic sees
/// the replication's aggregated predictions for the full sample and the
/// draw multiplicities (statistics that mimic a full re-estimate weight by
/// them; fixed-sample functionals ignore them). NaN components are skipped
/// for that replication.
pub fn bootstrap_cate_statistic<F>(
    dataset: &Dataset,
    weights: &WeightVector,
    splits: &[SplitResult],
    outcome_col: usize,
    config: &BootstrapConfig,
    stat_dim: usize,
    stat: F,
) -> Result<BootstrapStatistics>
where
    F: Fn(&[f64], &[u32]) -> Vec<f64> + Sync,
{
    if splits.is_empty() {
        return Err(Error::InvalidArgument("no splits supplied".into()));
    }
    let n = dataset.n();
    if weights.len() != n || splits.iter().any(|s| s.predictions.len() != n) {
        return Err(Error::InvalidArgument("splits do not match the dataset".into()));
    }
    let b_total = config.replications;
    let z = dataset.heterogeneity();
    let d = dataset.treatment();
    let y = dataset.outcome(outcome_col);
    let w_full = weights.as_slice();
    let n_clusters = dataset.n_clusters();
    let cluster_index = dataset.cluster_index();

    let n_blocks = b_total.div_ceil(BOOTSTRAP_BLOCK);
    let blocks: Vec<(VectorVariance, usize)> = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let lo = block * BOOTSTRAP_BLOCK;
            let hi = (lo + BOOTSTRAP_BLOCK).min(b_total);
            let mut acc = VectorVariance::new(stat_dim);
            let mut excluded = 0usize;
            let mut gamma_b = vec![0.0f64; n];
            'reps: for b in lo..hi {
                let mut rng = stream_rng(config.seed, "cate-bootstrap", b as u64);
                let counts = draw_cluster_counts(n_clusters, &mut rng);
                let k = observation_multiplicities(cluster_index, &counts);

                gamma_b.iter_mut().for_each(|v| *v = 0.0);
                for split in splits {
                    // Align the resample with this split's estimation sample.
                    let rows: Vec<usize> = split
                        .estimation
                        .iter()
                        .copied()
                        .filter(|&i| k[i] > 0)
                        .collect();
                    if rows.is_empty() {
                        excluded += 1;
                        continue 'reps;
                    }
                    let d_sub: Vec<bool> = rows.iter().map(|&i| d[i]).collect();
                    let raw_w: Vec<f64> = rows
                        .iter()
                        .map(|&i| w_full[i] * k[i] as f64)
                        .collect();
                    let mass_t = raw_w.iter().zip(&d_sub).filter(|(_, &t)| t).map(|(&v, _)| v).sum::<f64>();
                    let mass_c = raw_w.iter().zip(&d_sub).filter(|(_, &t)| !t).map(|(&v, _)| v).sum::<f64>();
                    if mass_t <= 0.0 || mass_c <= 0.0 {
                        excluded += 1;
                        continue 'reps;
                    }
                    let w_sub: Vec<f64> = raw_w
                        .iter()
                        .zip(&d_sub)
                        .map(|(&v, &t)| if t { v / mass_t } else { v / mass_c })
                        .collect();
                    let y_sub = Array1::from_iter(rows.iter().map(|&i| y[i]));
                    let mut z_sub = Array2::<f64>::zeros((rows.len(), z.ncols()));
                    for (r, &i) in rows.iter().enumerate() {
                        for c in 0..z.ncols() {
                            z_sub[(r, c)] = z[(i, c)];
                        }
                    }
                    let refit = match split.frozen.refit(y_sub.view(), &z_sub.view(), &d_sub, &w_sub) {
                        Ok(r) => r,
                        Err(_) => {
                            excluded += 1;
                            continue 'reps;
                        }
                    };
                    // A resample too small to identify the frozen
                    // coefficients excludes the whole replication.
                    if !refit.dropped.is_empty() {
                        excluded += 1;
                        continue 'reps;
                    }
                    let preds = z.dot(&refit.delta);
                    for i in 0..n {
                        gamma_b[i] += preds[i];
                    }
                }
                let s = splits.len() as f64;
                gamma_b.iter_mut().for_each(|v| *v /= s);
                let components = stat(&gamma_b, &k);
                debug_assert_eq!(components.len(), stat_dim);
                acc.push(&components);
            }
            (acc, excluded)
        })
        .collect();

    let mut acc = VectorVariance::new(stat_dim);
    let mut excluded = 0usize;
    for (block_acc, block_excluded) in &blocks {
        acc.merge(block_acc);
        excluded += block_excluded;
    }
    let limit = (config.max_exclusion_share * b_total as f64).floor() as usize;
    if excluded > limit {
        return Err(Error::TooManyExclusions {
            excluded,
            requested: b_total,
            limit,
        });
    }
    Ok(BootstrapStatistics {
        se: acc.population_sd(),
        means: acc.means().to_vec(),
        counts: acc.counts().to_vec(),
        b_requested: b_total,
        b_used: b_total - excluded,
        excluded,
    })
}

#[derive(Clone, Debug)]
pub struct BootstrapStatistics {
    /// Population standard deviation per statistic component.
    pub se: Vec<f64>,
    pub means: Vec<f64>,
    /// Contributing replications per component.
    pub counts: Vec<u64>,
    pub b_requested: usize,
    pub b_used: usize,
    pub excluded: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupSe {
    pub label: String,
    pub point: f64,
    pub se: f64,
}

#[derive(Clone, Debug)]
pub struct CateBootstrap {
    /// Per-observation standard error of the bagged CATE.
    pub sigma_i: Vec<f64>,
    pub groups: Vec<GroupSe>,
    pub b_requested: usize,
    pub b_used: usize,
    pub excluded: usize,
}

/// Standard errors for the bagged CATEs and for group averages, with the
/// selected sets frozen per split.
pub fn bootstrap_cates(
    dataset: &Dataset,
    weights: &WeightVector,
    splits: &[SplitResult],
    bagged: &[f64],
    outcome_col: usize,
    groups: &[(String, Vec<bool>)],
    config: &BootstrapConfig,
) -> Result<CateBootstrap> {
    let n = dataset.n();
    if bagged.len() != n {
        return Err(Error::InvalidArgument("bagged CATE length mismatch".into()));
    }
    for (label, flags) in groups {
        if flags.len() != n {
            return Err(Error::InvalidArgument(format!("group '{label}' length mismatch")));
        }
        if !flags.iter().any(|&g| g) {
            return Err(Error::Degenerate(format!("group '{label}' is empty")));
        }
    }
    let g_count = groups.len();
    let stats_out = bootstrap_cate_statistic(
        dataset,
        weights,
        splits,
        outcome_col,
        config,
        n + g_count,
        |gamma_b, _k| {
            let mut v = Vec::with_capacity(n + g_count);
            v.extend_from_slice(gamma_b);
            for (_, flags) in groups {
                let count = flags.iter().filter(|&&g| g).count() as f64;
                let sum: f64 = gamma_b.iter().zip(flags).filter(|(_, &g)| g).map(|(&x, _)| x).sum();
                v.push(sum / count);
            }
            v
        },
    )?;
    let sigma_i = stats_out.se[..n].to_vec();
    let group_ses: Vec<GroupSe> = groups
        .iter()
        .enumerate()
        .map(|(gi, (label, flags))| {
            let count = flags.iter().filter(|&&g| g).count() as f64;
            let point: f64 = bagged.iter().zip(flags).filter(|(_, &g)| g).map(|(&x, _)| x).sum::<f64>() / count;
            GroupSe {
                label: label.clone(),
                point,
                se: stats_out.se[n + gi],
            }
        })
        .collect();
    Ok(CateBootstrap {
        sigma_i,
        groups: group_ses,
        b_requested: stats_out.b_requested,
        b_used: stats_out.b_used,
        excluded: stats_out.excluded,
    })
}

/// Bootstrap standard errors for ATE/ATET/ATENT by cluster resampling.
/// `reestimate_propensity` re-fits the participation model inside each
/// replication (the default); otherwise the original scores are reused.
pub fn bootstrap_averages(
    dataset: &Dataset,
    phat: &[f64],
    outcome_col: usize,
    reestimate_propensity: bool,
    config: &BootstrapConfig,
) -> Result<[EffectEstimate; 3]> {
    let n = dataset.n();
    if phat.len() != n {
        return Err(Error::InvalidArgument("propensity length mismatch".into()));
    }
    let y = dataset.outcome(outcome_col);
    let d = dataset.treatment();
    let x = dataset.confounders();
    let cluster_index = dataset.cluster_index();
    let n_clusters = dataset.n_clusters();
    let b_total = config.replications;

    let n_blocks = b_total.div_ceil(BOOTSTRAP_BLOCK);
    let blocks: Vec<(VectorVariance, usize)> = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let lo = block * BOOTSTRAP_BLOCK;
            let hi = (lo + BOOTSTRAP_BLOCK).min(b_total);
            let mut acc = VectorVariance::new(3);
            let mut excluded = 0usize;
            for b in lo..hi {
                let mut rng = stream_rng(config.seed, "avg-bootstrap", b as u64);
                let counts = draw_cluster_counts(n_clusters, &mut rng);
                let k = observation_multiplicities(cluster_index, &counts);
                let rows: Vec<usize> = (0..n)
                    .flat_map(|i| std::iter::repeat_n(i, k[i] as usize))
                    .collect();
                let d_b: Vec<bool> = rows.iter().map(|&i| d[i]).collect();
                if !d_b.iter().any(|&t| t) || !d_b.iter().any(|&t| !t) {
                    excluded += 1;
                    continue;
                }
                let y_b: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                let phat_b: Vec<f64> = if reestimate_propensity {
                    let mut x_b = Array2::<f64>::zeros((rows.len(), x.ncols()));
                    for (r, &i) in rows.iter().enumerate() {
                        for c in 0..x.ncols() {
                            x_b[(r, c)] = x[(i, c)];
                        }
                    }
                    match fit_logit(&x_b.view(), &d_b, &LogitOptions::default()) {
                        Ok(model) => model.predict(&x_b.view()).to_vec(),
                        Err(_) => {
                            excluded += 1;
                            continue;
                        }
                    }
                } else {
                    rows.iter().map(|&i| phat[i]).collect()
                };
                let w_b = match ipw_weights(&phat_b, &d_b) {
                    Ok(w) => w,
                    Err(_) => {
                        excluded += 1;
                        continue;
                    }
                };
                match estimate_averages(&y_b, &d_b, &phat_b, &w_b) {
                    Ok(e) => acc.push(&[e.ate, e.atet, e.atent]),
                    Err(_) => excluded += 1,
                }
            }
            (acc, excluded)
        })
        .collect();

    let mut acc = VectorVariance::new(3);
    let mut excluded = 0usize;
    for (block_acc, block_excluded) in &blocks {
        acc.merge(block_acc);
        excluded += block_excluded;
    }
    let limit = (config.max_exclusion_share * b_total as f64).floor() as usize;
    if excluded > limit {
        return Err(Error::TooManyExclusions {
            excluded,
            requested: b_total,
            limit,
        });
    }

    let w0 = ipw_weights(phat, d)?;
    let point = estimate_averages(y.as_slice().unwrap(), d, phat, &w0)?;
    let ses = acc.population_sd();
    let b_used = b_total - excluded;
    Ok([
        EffectEstimate {
            estimand: Estimand::Ate,
            value: point.ate,
            se: Some(ses[0]),
            replications: Some(b_used),
        },
        EffectEstimate {
            estimand: Estimand::Atet,
            value: point.atet,
            se: Some(ses[1]),
            replications: Some(b_used),
        },
        EffectEstimate {
            estimand: Estimand::Atent,
            value: point.atent,
            se: Some(ses[2]),
            replications: Some(b_used),
        },
    ])
}

/// Two-sided normal significance stars at the 10/5/1% levels.
pub fn significance_stars(value: f64, se: f64) -> &'static str {
    if se <= 0.0 {
        return "";
    }
    let z = (value / se).abs();
    if z > 2.5758 {
        "***"
    } else if z > 1.9600 {
        "**"
    } else if z > 1.6449 {
        "*"
    } else {
        ""
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CONSTANT_NAME;
    use crate::effects::{EaMode, SelectorOptions};
    use crate::pipeline::{run_pipeline, PipelineOptions};
    use crate::synth::{generate, named_config, DgpConfig};
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn toy_dataset(n: usize, n_clusters: usize, seed: u64) -> Dataset {
        let mut rng = crate::rng::seeded_rng(seed);
        let mut z = Array2::<f64>::ones((n, 3));
        let mut x = Array2::<f64>::zeros((n, 2));
        let mut d = vec![false; n];
        let mut y = Array2::<f64>::zeros((n, 1));
        for i in 0..n {
            z[(i, 1)] = rng.sample::<f64, _>(StandardNormal);
            z[(i, 2)] = rng.sample::<f64, _>(StandardNormal);
            x[(i, 0)] = rng.sample::<f64, _>(StandardNormal);
            x[(i, 1)] = rng.sample::<f64, _>(StandardNormal);
            d[i] = rng.gen::<f64>() < 0.5;
            y[(i, 0)] = 0.5 * z[(i, 1)]
                + (if d[i] { -0.6 + 0.5 * z[(i, 1)] } else { 0.0 })
                + 0.7 * rng.sample::<f64, _>(StandardNormal);
        }
        Dataset::new(
            y,
            vec!["y".into()],
            d,
            x,
            vec!["x1".into(), "x2".into()],
            z,
            vec![CONSTANT_NAME.into(), "z1".into(), "z2".into()],
            (0..n).map(|i| format!("c{}", i % n_clusters)).collect(),
            (0..n as u64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn homogeneous_scores_collapse_the_three_estimands() {
        let ds = toy_dataset(800, 40, 1);
        let phat = vec![0.5; ds.n()];
        let w = ipw_weights(&phat, ds.treatment()).unwrap();
        let y = ds.outcome(0);
        let e = estimate_averages(y.as_slice().unwrap(), ds.treatment(), &phat, &w).unwrap();
        let treated: Vec<f64> = (0..ds.n()).filter(|&i| ds.treatment()[i]).map(|i| y[i]).collect();
        let controls: Vec<f64> =
            (0..ds.n()).filter(|&i| !ds.treatment()[i]).map(|i| y[i]).collect();
        let diff = stats::mean(&treated) - stats::mean(&controls);
        assert!((e.ate - diff).abs() < 1e-10);
        assert!((e.atet - diff).abs() < 1e-10);
        assert!((e.atent - diff).abs() < 1e-10);
    }

    #[test]
    fn constant_outcome_gives_zero_effects() {
        let ds = toy_dataset(300, 20, 2);
        let phat: Vec<f64> = (0..ds.n()).map(|i| 0.3 + 0.4 * ((i % 7) as f64 / 7.0)).collect();
        let w = ipw_weights(&phat, ds.treatment()).unwrap();
        let y = vec![3.25; ds.n()];
        let e = estimate_averages(&y, ds.treatment(), &phat, &w).unwrap();
        assert!(e.ate.abs() < 1e-12);
        assert!(e.atet.abs() < 1e-12);
        assert!(e.atent.abs() < 1e-12);
    }

    #[test]
    fn oracle_estimates_land_near_truth() {
        let cfg = DgpConfig {
            n: 8_000,
            ..named_config("rct-linear").unwrap()
        };
        let (ds, truth) = generate(&cfg).unwrap();
        let phat = vec![0.5; ds.n()];
        let w = ipw_weights(&phat, ds.treatment()).unwrap();
        let y = ds.outcome(0);
        let e = estimate_averages(y.as_slice().unwrap(), ds.treatment(), &phat, &w).unwrap();
        // Crude 3-sigma bound: sd(y) is about 1.6 here, so the mean
        // difference has SE below 0.06.
        assert!((e.ate - truth.ate).abs() < 0.15, "ate {} vs {}", e.ate, truth.ate);
        assert!((e.atet - truth.atet).abs() < 0.15);
        assert!((e.atent - truth.atent).abs() < 0.15);
    }

    #[test]
    fn single_column_curve_matches_estimate_averages() {
        let ds = toy_dataset(500, 25, 3);
        let phat = vec![0.4; ds.n()];
        let w = ipw_weights(&phat, ds.treatment()).unwrap();
        let y = ds.outcome(0);
        let curve = monthly_effect_curve(ds.outcomes(), ds.treatment(), &phat, &w).unwrap();
        let e = estimate_averages(y.as_slice().unwrap(), ds.treatment(), &phat, &w).unwrap();
        assert_eq!(curve.len(), 1);
        assert_eq!(curve[0].ate, e.ate);
        assert_eq!(curve[0].atet, e.atet);
        // Levels decompose the contrasts.
        assert!((curve[0].level_treated - curve[0].level_control - e.ate).abs() < 1e-12);
        assert!(
            (curve[0].atet_level_treated - curve[0].atet_level_control - e.atet).abs() < 1e-12
        );
    }

    #[test]
    fn identical_columns_give_a_flat_curve() {
        let ds = toy_dataset(300, 20, 4);
        let y = ds.outcome(0);
        let mut two = Array2::<f64>::zeros((ds.n(), 2));
        for i in 0..ds.n() {
            two[(i, 0)] = y[i];
            two[(i, 1)] = y[i];
        }
        let phat = vec![0.5; ds.n()];
        let w = ipw_weights(&phat, ds.treatment()).unwrap();
        let curve = monthly_effect_curve(&two, ds.treatment(), &phat, &w).unwrap();
        assert_eq!(curve[0].ate, curve[1].ate);
        assert_eq!(curve[0].atet, curve[1].atet);
    }

    fn pipeline_fixture(n: usize, n_clusters: usize) -> (Dataset, WeightVector, Vec<SplitResult>, Vec<f64>) {
        let ds = toy_dataset(n, n_clusters, 5);
        let phat = vec![0.5; ds.n()];
        let w = ipw_weights(&phat, ds.treatment()).unwrap();
        let opts = PipelineOptions {
            n_splits: 3,
            master_seed: 42,
            selector: SelectorOptions {
                n_lambda: 25,
                ..SelectorOptions::default()
            },
            method: crate::pipeline::PipelineMethod::Mcm(EaMode::None),
            ..PipelineOptions::default()
        };
        let (splits, ens) = run_pipeline(&ds, &vec![0.5; ds.n()], &w, &opts).unwrap();
        (ds, w, splits, ens.bagged)
    }

    #[test]
    fn degenerate_single_cluster_resample_gives_zero_se() {
        // All observations in one cluster: every replication draws the same
        // sample, so every sigma is exactly zero. Splits are hand-made
        // because honest splitting itself requires two clusters.
        let ds = toy_dataset(120, 1, 6);
        let phat = vec![0.5; ds.n()];
        let w = ipw_weights(&phat, ds.treatment()).unwrap();
        let train: Vec<usize> = (0..60).collect();
        let estimation: Vec<usize> = (60..120).collect();
        let split = SplitResult {
            split_index: 0,
            train,
            estimation,
            frozen: crate::pipeline::FrozenSelection::Plain { selected: vec![1] },
            selected_heterogeneity: vec![1],
            lambda: None,
            cv_table: None,
            delta: vec![0.0; 3],
            predictions: vec![0.0; 120],
            dropped_in_refit: vec![],
        };
        let cfg = BootstrapConfig::new(20, 9).unwrap();
        let out = bootstrap_cates(
            &ds,
            &w,
            &[split],
            &vec![0.0; 120],
            0,
            &[("all".into(), vec![true; 120])],
            &cfg,
        )
        .unwrap();
        assert!(out.sigma_i.iter().all(|&s| s == 0.0));
        assert_eq!(out.groups[0].se, 0.0);
        assert_eq!(out.excluded, 0);
    }

    #[test]
    fn sigma_positive_and_group_se_matches_singleton() {
        let (ds, w, splits, bagged) = pipeline_fixture(1200, 60);
        let cfg = BootstrapConfig::new(60, 11).unwrap();
        let mut single = vec![false; ds.n()];
        single[17] = true;
        let out = bootstrap_cates(
            &ds,
            &w,
            &splits,
            &bagged,
            0,
            &[("row17".into(), single)],
            &cfg,
        )
        .unwrap();
        assert!(out.sigma_i.iter().all(|&s| s >= 0.0));
        assert!(out.sigma_i.iter().any(|&s| s > 0.0));
        // A singleton group's SE equals that observation's sigma_i.
        assert!((out.groups[0].se - out.sigma_i[17]).abs() < 1e-15);
        assert_eq!(out.groups[0].point, bagged[17]);
    }

    #[test]
    fn outcomes_outside_estimation_samples_never_matter() {
        // Changing the outcome of a row that only ever appears in training
        // halves leaves every bootstrap refit untouched.
        let (ds, w, splits, bagged) = pipeline_fixture(600, 30);
        let split0 = &splits[..1];
        let target = split0[0].train[0];
        let cfg = BootstrapConfig::new(25, 13).unwrap();
        let groups = vec![("all".to_string(), vec![true; ds.n()])];
        let a = bootstrap_cates(&ds, &w, split0, &bagged, 0, &groups, &cfg).unwrap();

        let mut y2 = Array2::<f64>::zeros((ds.n(), 1));
        let y = ds.outcome(0);
        for i in 0..ds.n() {
            y2[(i, 0)] = if i == target { y[i] + 1000.0 } else { y[i] };
        }
        let ds2 = Dataset::new(
            y2,
            vec!["y".into()],
            ds.treatment().to_vec(),
            ds.confounders().clone(),
            ds.confounder_names().to_vec(),
            ds.heterogeneity().clone(),
            ds.heterogeneity_names().to_vec(),
            ds.cluster_ids().to_vec(),
            ds.obs_ids().to_vec(),
        )
        .unwrap();
        let b = bootstrap_cates(&ds2, &w, split0, &bagged, 0, &groups, &cfg).unwrap();
        assert_eq!(a.sigma_i, b.sigma_i);
        assert_eq!(a.groups[0].se, b.groups[0].se);
    }

    #[test]
    fn replication_order_does_not_matter() {
        // The reduction is block-deterministic; running twice (rayon may
        // schedule blocks differently) gives bit-identical output.
        let (ds, w, splits, bagged) = pipeline_fixture(600, 30);
        let cfg = BootstrapConfig::new(40, 21).unwrap();
        let groups = vec![("all".to_string(), vec![true; ds.n()])];
        let a = bootstrap_cates(&ds, &w, &splits, &bagged, 0, &groups, &cfg).unwrap();
        let b = bootstrap_cates(&ds, &w, &splits, &bagged, 0, &groups, &cfg).unwrap();
        assert_eq!(a.sigma_i, b.sigma_i);
        assert_eq!(a.groups[0].se, b.groups[0].se);
    }

    #[test]
    fn singleton_clusters_reduce_to_observation_bootstrap() {
        // With singleton clusters the cluster draw IS an observation draw:
        // multiplicities from the helper match direct draws on the same
        // stream.
        let n = 50;
        let cluster_index: Vec<usize> = (0..n).collect();
        let mut rng1 = stream_rng(7, "cate-bootstrap", 3);
        let counts = draw_cluster_counts(n, &mut rng1);
        let k = observation_multiplicities(&cluster_index, &counts);
        let mut rng2 = stream_rng(7, "cate-bootstrap", 3);
        let mut direct = vec![0u32; n];
        for _ in 0..n {
            direct[rng2.gen_range(0..n)] += 1;
        }
        assert_eq!(k, direct);
    }

    #[test]
    fn zero_outcome_bootstrap_averages_se_is_zero() {
        let ds = toy_dataset(300, 20, 8);
        let y0 = Array2::<f64>::zeros((ds.n(), 1));
        let ds = Dataset::new(
            y0,
            vec!["y".into()],
            ds.treatment().to_vec(),
            ds.confounders().clone(),
            ds.confounder_names().to_vec(),
            ds.heterogeneity().clone(),
            ds.heterogeneity_names().to_vec(),
            ds.cluster_ids().to_vec(),
            ds.obs_ids().to_vec(),
        )
        .unwrap();
        let phat = vec![0.5; ds.n()];
        let cfg = BootstrapConfig::new(30, 3).unwrap();
        let est = bootstrap_averages(&ds, &phat, 0, false, &cfg).unwrap();
        for e in est {
            assert_eq!(e.value, 0.0);
            assert_eq!(e.se.unwrap(), 0.0);
        }
    }

    #[test]
    fn bootstrap_se_tracks_monte_carlo_sd() {
        // The bootstrap SE of the ATE is within 30% of the Monte Carlo sd of
        // the estimator across independent datasets.
        let base = DgpConfig {
            n: 1_500,
            n_clusters: 50,
            ..named_config("rct-linear").unwrap()
        };
        let n_mc = 24;
        let mut estimates = Vec::new();
        for rep in 0..n_mc {
            let cfg = DgpConfig {
                seed: base.seed + 1000 + rep as u64,
                ..base.clone()
            };
            let (ds, _) = generate(&cfg).unwrap();
            let phat = vec![0.5; ds.n()];
            let w = ipw_weights(&phat, ds.treatment()).unwrap();
            let y = ds.outcome(0);
            estimates
                .push(estimate_averages(y.as_slice().unwrap(), ds.treatment(), &phat, &w).unwrap().ate);
        }
        let mc_sd = stats::variance(&estimates, 1).sqrt();

        let (ds, _) = generate(&base).unwrap();
        let phat = vec![0.5; ds.n()];
        let cfg = BootstrapConfig::new(200, 77).unwrap();
        let est = bootstrap_averages(&ds, &phat, 0, false, &cfg).unwrap();
        let se = est[0].se.unwrap();
        assert!(
            (se - mc_sd).abs() / mc_sd < 0.45,
            "bootstrap SE {se} vs Monte Carlo sd {mc_sd}"
        );
    }

    #[test]
    fn fading_effect_curve_tracked_within_bootstrap_bands() {
        // Effect fading linearly to zero across 12 outcome columns: the
        // estimated per-column ATE falls inside the 95% bootstrap band of
        // the true value in at least 10 of 12 columns.
        let m = 12;
        let fractions: Vec<f64> = (0..m).map(|k| 1.0 - k as f64 / (m - 1) as f64).collect();
        let cfg = DgpConfig {
            n: 4000,
            n_clusters: 80,
            horizon_fractions: fractions.clone(),
            ..named_config("rct-linear").unwrap()
        };
        let (ds, truth) = generate(&cfg).unwrap();
        let phat = vec![0.5; ds.n()];
        let w = ipw_weights(&phat, ds.treatment()).unwrap();
        let curve = monthly_effect_curve(ds.outcomes(), ds.treatment(), &phat, &w).unwrap();
        let boot_cfg = BootstrapConfig::new(150, 41).unwrap();
        let mut hits = 0;
        for (col, &frac) in fractions.iter().enumerate() {
            let est = bootstrap_averages(&ds, &phat, col, false, &boot_cfg).unwrap();
            let se = est[0].se.unwrap();
            let true_ate = truth.ate * frac;
            if (curve[col].ate - true_ate).abs() <= 1.96 * se {
                hits += 1;
            }
        }
        assert!(hits >= 10, "curve inside the band in only {hits}/12 columns");
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(significance_stars(1.0, 1.0), "");
        assert_eq!(significance_stars(1.7, 1.0), "*");
        assert_eq!(significance_stars(2.0, 1.0), "**");
        assert_eq!(significance_stars(2.6, 1.0), "***");
        assert_eq!(significance_stars(1.0, 0.0), "");
    }
}
