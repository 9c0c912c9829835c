//! Summaries of the estimated CATEs: descriptive statistics, median-split
//! heterogeneity tables, Gaussian kernel density and local-constant kernel
//! regression curves, and cross-method correlation.

use crate::error::{Error, Result};
use crate::inference::bootstrap_cate_statistic;
use crate::policy::CateBootstrapContext;
use crate::stats;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// Mean of the per-observation bootstrap standard errors.
    pub mean_se: f64,
}

/// Descriptive statistics of the bagged CATEs (sd uses divisor n−1).
pub fn cate_summary(label: &str, gamma_bar: &[f64], sigma_i: &[f64]) -> Result<SummaryRow> {
    if gamma_bar.is_empty() {
        return Err(Error::InvalidArgument("empty CATE vector".into()));
    }
    if sigma_i.len() != gamma_bar.len() {
        return Err(Error::InvalidArgument("sigma length mismatch".into()));
    }
    let sd = if gamma_bar.len() > 1 {
        stats::variance(gamma_bar, 1).sqrt()
    } else {
        0.0
    };
    Ok(SummaryRow {
        label: label.to_string(),
        mean: stats::mean(gamma_bar),
        median: stats::median(gamma_bar),
        sd,
        min: gamma_bar.iter().cloned().fold(f64::INFINITY, f64::min),
        max: gamma_bar.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean_se: stats::mean(sigma_i),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BinarySplitRow {
    pub name: String,
    /// Share and mean CATE of the low group (zero / below median).
    pub share_low: f64,
    pub mean_low: f64,
    /// Share and mean CATE of the high group (one / at-or-above median).
    pub share_high: f64,
    pub mean_high: f64,
    pub difference: f64,
    pub se: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BinarySplitTable {
    pub rows: Vec<BinarySplitRow>,
    /// Characteristics skipped as degenerate (single value).
    pub skipped: Vec<String>,
}

/// Average CATEs by low/high values of each characteristic: binary
/// characteristics split at 0/1; non-binary ones at the median, with the
/// median value itself assigned to the high group.
pub fn binary_split_table(
    gamma_bar: &[f64],
    characteristics: &Array2<f64>,
    names: &[String],
    bootstrap: Option<&CateBootstrapContext>,
) -> Result<BinarySplitTable> {
    let n = gamma_bar.len();
    if characteristics.nrows() != n || names.len() != characteristics.ncols() {
        return Err(Error::InvalidArgument("characteristic shape mismatch".into()));
    }

    // Fixed group membership per characteristic (never re-formed in the
    // bootstrap; only the CATEs are re-estimated there).
    let mut highs: Vec<Option<Vec<bool>>> = Vec::with_capacity(names.len());
    let mut skipped = Vec::new();
    for (c, name) in names.iter().enumerate() {
        let col: Vec<f64> = (0..n).map(|i| characteristics[(i, c)]).collect();
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            skipped.push(name.clone());
            highs.push(None);
            continue;
        }
        let is_binary = col.iter().all(|&v| v == 0.0 || v == 1.0);
        let high: Vec<bool> = if is_binary {
            col.iter().map(|&v| v == 1.0).collect()
        } else {
            let med = stats::median(&col);
            col.iter().map(|&v| v >= med).collect()
        };
        if high.iter().all(|&h| h) || high.iter().all(|&h| !h) {
            skipped.push(name.clone());
            highs.push(None);
            continue;
        }
        highs.push(Some(high));
    }

    let live: Vec<usize> = (0..names.len()).filter(|&c| highs[c].is_some()).collect();
    let ses: Option<Vec<f64>> = match bootstrap {
        Some(ctx) if !live.is_empty() => {
            let groups: Vec<Vec<bool>> = live
                .iter()
                .map(|&c| highs[c].as_ref().unwrap().clone())
                .collect();
            let out = bootstrap_cate_statistic(
                ctx.dataset,
                ctx.weights,
                ctx.splits,
                ctx.outcome_col,
                &ctx.config,
                groups.len(),
                move |gamma_b, k| {
                    // Group membership is fixed, but each replication
                    // averages over its resampled observations (draw
                    // multiplicities as frequency weights) so the standard
                    // error carries group-composition variability.
                    groups
                        .iter()
                        .map(|high| {
                            let mut hi_sum = 0.0;
                            let mut hi_n = 0.0f64;
                            let mut lo_sum = 0.0;
                            let mut lo_n = 0.0f64;
                            for (i, &h) in high.iter().enumerate() {
                                let ki = k[i] as f64;
                                if ki == 0.0 {
                                    continue;
                                }
                                if h {
                                    hi_sum += ki * gamma_b[i];
                                    hi_n += ki;
                                } else {
                                    lo_sum += ki * gamma_b[i];
                                    lo_n += ki;
                                }
                            }
                            if hi_n == 0.0 || lo_n == 0.0 {
                                f64::NAN
                            } else {
                                hi_sum / hi_n - lo_sum / lo_n
                            }
                        })
                        .collect()
                },
            )?;
            Some(out.se)
        }
        _ => None,
    };

    let mut rows = Vec::new();
    for (slot, &c) in live.iter().enumerate() {
        let high = highs[c].as_ref().unwrap();
        let hi: Vec<f64> = (0..n).filter(|&i| high[i]).map(|i| gamma_bar[i]).collect();
        let lo: Vec<f64> = (0..n).filter(|&i| !high[i]).map(|i| gamma_bar[i]).collect();
        let mean_high = stats::mean(&hi);
        let mean_low = stats::mean(&lo);
        rows.push(BinarySplitRow {
            name: names[c].clone(),
            share_low: lo.len() as f64 / n as f64,
            mean_low,
            share_high: hi.len() as f64 / n as f64,
            mean_high,
            difference: mean_high - mean_low,
            se: ses.as_ref().map(|s| s[slot]),
        });
    }
    Ok(BinarySplitTable { rows, skipped })
}

/// Silverman's rule-of-thumb bandwidth `0.9·min(sd, IQR/1.34)·n^(−1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(
            "automatic bandwidth needs at least 2 observations".into(),
        ));
    }
    let sd = stats::variance(values, 1).sqrt();
    let iqr = stats::interquartile_range(values);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (values.len() as f64).powf(-0.2);
    if h <= 0.0 {
        return Err(Error::Degenerate("zero bandwidth: the sample has no spread".into()));
    }
    Ok(h)
}

const KDE_GRID: usize = 512;
const SQRT_2PI: f64 = 2.506_628_274_631_000_3;

/// Gaussian kernel density estimate at a single point.
pub fn gaussian_kde_at(values: &[f64], bandwidth: f64, x: f64) -> f64 {
    let nh = values.len() as f64 * bandwidth;
    values
        .iter()
        .map(|&v| {
            let u = (x - v) / bandwidth;
            (-0.5 * u * u).exp() / SQRT_2PI
        })
        .sum::<f64>()
        / nh
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KdeCurve {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// Gaussian kernel density on a 512-point grid spanning
/// `[min − 3h, max + 3h]`; `None` bandwidth means Silverman's rule.
pub fn kernel_density(values: &[f64], bandwidth: Option<f64>) -> Result<KdeCurve> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")))
        }
        None => silverman_bandwidth(values)?,
    };
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = min - 3.0 * h;
    let hi = max + 3.0 * h;
    let step = (hi - lo) / (KDE_GRID - 1) as f64;
    let grid: Vec<f64> = (0..KDE_GRID).map(|g| lo + g as f64 * step).collect();
    let density: Vec<f64> = grid.iter().map(|&x| gaussian_kde_at(values, h, x)).collect();
    Ok(KdeCurve {
        bandwidth: h,
        grid,
        density,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelRegressionCurve {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    /// Local-constant estimates; `None` marks grid points with total kernel
    /// weight below 1e-8 (gaps).
    pub estimate: Vec<Option<f64>>,
    /// Histogram of the regressor over the same range.
    pub histogram: Vec<HistogramBin>,
}

/// Local-constant (Nadaraya–Watson) regression of `y` on `x` with a
/// Gaussian kernel, on a 512-point grid over the range of `x`. The gap
/// criterion uses the summed standard-normal kernel values.
pub fn kernel_regression(
    x: &[f64],
    y: &[f64],
    bandwidth: f64,
    histogram_bins: usize,
) -> Result<KernelRegressionCurve> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidArgument("x and y must be equal-length and non-empty".into()));
    }
    if bandwidth <= 0.0 {
        return Err(Error::InvalidArgument("bandwidth must be positive".into()));
    }
    if histogram_bins == 0 {
        return Err(Error::InvalidArgument("need at least one histogram bin".into()));
    }
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(f64::MIN_POSITIVE);
    let step = span / (KDE_GRID - 1) as f64;
    let grid: Vec<f64> = (0..KDE_GRID).map(|g| min + g as f64 * step).collect();
    let estimate: Vec<Option<f64>> = grid
        .iter()
        .map(|&g| {
            let mut wsum = 0.0;
            let mut wy = 0.0;
            for (&xi, &yi) in x.iter().zip(y) {
                let u = (g - xi) / bandwidth;
                let k = (-0.5 * u * u).exp() / SQRT_2PI;
                wsum += k;
                wy += k * yi;
            }
            if wsum < 1e-8 {
                None
            } else {
                Some(wy / wsum)
            }
        })
        .collect();

    let bin_width = span / histogram_bins as f64;
    let mut histogram: Vec<HistogramBin> = (0..histogram_bins)
        .map(|b| HistogramBin {
            lo: min + b as f64 * bin_width,
            hi: min + (b + 1) as f64 * bin_width,
            count: 0,
        })
        .collect();
    for &xi in x {
        let mut b = ((xi - min) / bin_width) as usize;
        if b >= histogram_bins {
            b = histogram_bins - 1;
        }
        histogram[b].count += 1;
    }
    Ok(KernelRegressionCurve {
        bandwidth,
        grid,
        estimate,
        histogram,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// Pearson correlations; `None` marks rows/columns of zero-variance
    /// vectors (undefined).
    pub values: Vec<Vec<Option<f64>>>,
}

/// Pairwise Pearson correlations between CATE vectors from different
/// estimation methods.
pub fn correlate_methods(entries: &[(String, Vec<f64>)]) -> Result<CorrelationMatrix> {
    if entries.len() < 2 {
        return Err(Error::InvalidArgument("need at least two methods to correlate".into()));
    }
    let n = entries[0].1.len();
    if n < 2 || entries.iter().any(|(_, v)| v.len() != n) {
        return Err(Error::InvalidArgument(
            "method CATE vectors must share a length of at least 2".into(),
        ));
    }
    let m = entries.len();
    let mut values = vec![vec![None; m]; m];
    for a in 0..m {
        for b in 0..m {
            values[a][b] = if a == b {
                // Unit diagonal unless the vector is degenerate.
                stats::pearson(&entries[a].1, &entries[a].1).map(|_| 1.0)
            } else {
                stats::pearson(&entries[a].1, &entries[b].1)
            };
        }
    }
    Ok(CorrelationMatrix {
        labels: entries.iter().map(|(l, _)| l.clone()).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn summary_hand_values() {
        let row = cate_summary("g", &[1.0, 2.0, 3.0], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(row.mean, 2.0);
        assert_eq!(row.median, 2.0);
        assert!((row.sd - 1.0).abs() < 1e-12);
        assert_eq!(row.min, 1.0);
        assert_eq!(row.max, 3.0);
        assert!((row.mean_se - 0.2).abs() < 1e-12);
    }

    #[test]
    fn summary_constant_vector() {
        let row = cate_summary("g", &[0.5; 6], &[0.0; 6]).unwrap();
        assert_eq!(row.sd, 0.0);
        assert_eq!(row.min, row.max);
        assert!(row.min <= row.median && row.median <= row.max);
    }

    #[test]
    fn binary_split_decomposes_the_overall_mean() {
        let mut rng = crate::rng::seeded_rng(17);
        let n = 500;
        let gamma: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut chars = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            chars[(i, 0)] = if rng.gen::<f64>() < 0.3 { 1.0 } else { 0.0 };
            chars[(i, 1)] = rng.sample::<f64, _>(StandardNormal);
        }
        let table = binary_split_table(
            &gamma,
            &chars,
            &["b".to_string(), "v".to_string()],
            None,
        )
        .unwrap();
        let overall = stats::mean(&gamma);
        for row in &table.rows {
            let recomposed = row.share_high * row.mean_high + row.share_low * row.mean_low;
            assert!((recomposed - overall).abs() < 1e-10, "{}", row.name);
        }
    }

    #[test]
    fn degenerate_characteristic_is_skipped() {
        let gamma = [0.1, 0.2, 0.3];
        let chars = Array2::from_elem((3, 1), 1.0);
        let table = binary_split_table(&gamma, &chars, &["ones".to_string()], None).unwrap();
        assert!(table.rows.is_empty());
        assert_eq!(table.skipped, vec!["ones".to_string()]);
    }

    #[test]
    fn median_value_lands_in_the_high_group() {
        // Values {1,2,3}: median 2; low = {1}, high = {2,3}.
        let gamma = [10.0, 20.0, 30.0];
        let mut chars = Array2::<f64>::zeros((3, 1));
        chars[(0, 0)] = 1.0;
        chars[(1, 0)] = 2.0;
        chars[(2, 0)] = 3.0;
        let table = binary_split_table(&gamma, &chars, &["v".to_string()], None).unwrap();
        let row = &table.rows[0];
        assert!((row.mean_low - 10.0).abs() < 1e-12);
        assert!((row.mean_high - 25.0).abs() < 1e-12);
    }

    #[test]
    fn split_table_separates_signal_from_null() {
        // A characteristic aligned with the true effect shows a difference
        // beyond three standard errors; characteristics independent of the
        // effect stay within three standard errors in nearly all runs.
        use crate::data::{Dataset, CONSTANT_NAME};
        use crate::inference::BootstrapConfig;
        use crate::pipeline::{run_pipeline, PipelineOptions};
        use crate::policy::CateBootstrapContext;
        use crate::propensity::ipw_weights;
        use crate::effects::SelectorOptions;

        let build = |seed: u64| -> (Dataset, Vec<f64>) {
            let n = 1500;
            let mut rng = crate::rng::seeded_rng(seed);
            let mut z = Array2::<f64>::ones((n, 4));
            let mut x = Array2::<f64>::zeros((n, 1));
            let mut d = vec![false; n];
            let mut tau = vec![0.0; n];
            let mut y = Array2::<f64>::zeros((n, 1));
            for i in 0..n {
                for j in 1..4 {
                    z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
                }
                x[(i, 0)] = rng.sample::<f64, _>(StandardNormal);
                d[i] = rng.gen::<f64>() < 0.5;
                tau[i] = 0.8 * z[(i, 1)];
                y[(i, 0)] = 0.5 * z[(i, 2)]
                    + (if d[i] { tau[i] } else { 0.0 })
                    + 0.8 * rng.sample::<f64, _>(StandardNormal);
            }
            let ds = Dataset::new(
                y,
                vec!["y".into()],
                d,
                x,
                vec!["x1".into()],
                z,
                vec![CONSTANT_NAME.into(), "z1".into(), "z2".into(), "z3".into()],
                (0..n).map(|i| format!("c{}", i % 60)).collect(),
                (0..n as u64).collect(),
            )
            .unwrap();
            (ds, tau)
        };

        let mut null_within = 0usize;
        let runs = 10;
        for rep in 0..runs {
            let (ds, tau) = build(700 + rep);
            let phat = vec![0.5; ds.n()];
            let w = ipw_weights(&phat, ds.treatment()).unwrap();
            let opts = PipelineOptions {
                n_splits: 2,
                master_seed: 40 + rep,
                selector: SelectorOptions {
                    folds: 5,
                    n_lambda: 25,
                    ..SelectorOptions::default()
                },
                ..PipelineOptions::default()
            };
            let (splits, ens) = run_pipeline(&ds, &phat, &w, &opts).unwrap();
            let ctx = CateBootstrapContext {
                dataset: &ds,
                weights: &w,
                splits: &splits,
                outcome_col: 0,
                config: BootstrapConfig::new(100, 900 + rep).unwrap(),
            };
            // Signal: above-median true effect (a function of z1). Null: the
            // design column z3, which carries no effect.
            let med = stats::median(&tau);
            let mut chars = Array2::<f64>::zeros((ds.n(), 2));
            for i in 0..ds.n() {
                chars[(i, 0)] = if tau[i] > med { 1.0 } else { 0.0 };
                chars[(i, 1)] = ds.heterogeneity()[(i, 3)];
            }
            let table = binary_split_table(
                &ens.bagged,
                &chars,
                &["signal".to_string(), "noise".to_string()],
                Some(&ctx),
            )
            .unwrap();
            let signal = &table.rows[0];
            assert!(
                signal.difference > 3.0 * signal.se.unwrap(),
                "run {rep}: signal difference {} vs SE {}",
                signal.difference,
                signal.se.unwrap()
            );
            let null = &table.rows[1];
            if null.difference.abs() < 3.0 * null.se.unwrap() {
                null_within += 1;
            }
        }
        assert!(null_within >= 9, "null within 3 SEs in only {null_within}/{runs} runs");
    }

    #[test]
    fn kde_single_point_height() {
        let h = 0.37;
        let x0 = 1.25;
        let d = gaussian_kde_at(&[x0], h, x0);
        assert!((d - 1.0 / (h * SQRT_2PI)).abs() < 1e-12);
    }

    #[test]
    fn kde_integrates_to_one_and_is_nonnegative() {
        let mut rng = crate::rng::seeded_rng(23);
        let values: Vec<f64> = (0..800).map(|_| rng.gen_range(-2.0..5.0)).collect();
        let curve = kernel_density(&values, None).unwrap();
        assert!(curve.density.iter().all(|&d| d >= 0.0));
        let mut integral = 0.0;
        for g in 1..curve.grid.len() {
            integral += 0.5
                * (curve.density[g] + curve.density[g - 1])
                * (curve.grid[g] - curve.grid[g - 1]);
        }
        assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
    }

    #[test]
    fn kde_recovers_the_normal_density() {
        let mut rng = crate::rng::seeded_rng(0);
        let values: Vec<f64> = (0..10_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let curve = kernel_density(&values, None).unwrap();
        let max_dev = curve
            .grid
            .iter()
            .zip(&curve.density)
            .map(|(&x, &d)| (d - (-0.5 * x * x).exp() / SQRT_2PI).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 0.02, "max deviation {max_dev}");
    }

    #[test]
    fn kde_invariant_to_permutation_and_rejects_zero_bandwidth() {
        let values = [0.3, 1.2, -0.7, 2.2, 0.0];
        let mut reversed = values;
        reversed.reverse();
        let a = kernel_density(&values, Some(0.5)).unwrap();
        let b = kernel_density(&reversed, Some(0.5)).unwrap();
        for (da, db) in a.density.iter().zip(&b.density) {
            assert!((da - db).abs() < 1e-12);
        }
        assert!(kernel_density(&values, Some(0.0)).is_err());
        assert!(kernel_density(&[1.0, 1.0, 1.0], None).is_err());
    }

    #[test]
    fn kernel_regression_constant_outcome() {
        let mut rng = crate::rng::seeded_rng(31);
        let x: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y = vec![4.2; 200];
        let curve = kernel_regression(&x, &y, 0.1, 20).unwrap();
        for e in curve.estimate.iter().flatten() {
            assert!((e - 4.2).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_regression_identity_bias_bound() {
        // y = x on a dense grid: local-constant bias stays below 2h inside
        // the support.
        let n = 4000;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let y = x.clone();
        let h = 0.02;
        let curve = kernel_regression(&x, &y, h, 20).unwrap();
        for (g, est) in curve.grid.iter().zip(&curve.estimate) {
            if *g < 3.0 * h || *g > 1.0 - 3.0 * h {
                continue;
            }
            let e = est.expect("interior point has weight");
            assert!((e - g).abs() < 2.0 * h, "at {g}: {e}");
        }
    }

    #[test]
    fn kernel_regression_marks_gaps() {
        // Two far-apart lumps with a tiny bandwidth leave the middle empty.
        let mut x = vec![0.0; 50];
        x.extend(vec![100.0; 50]);
        let y: Vec<f64> = (0..100).map(|i| if i < 50 { 1.0 } else { 2.0 }).collect();
        let curve = kernel_regression(&x, &y, 0.5, 10).unwrap();
        assert!(curve.estimate.iter().any(|e| e.is_none()));
        assert_eq!(curve.histogram.iter().map(|b| b.count).sum::<usize>(), 100);
    }

    #[test]
    fn correlation_matrix_hand_values() {
        let entries = vec![
            ("a".to_string(), vec![1.0, 2.0, 3.0]),
            ("b".to_string(), vec![1.0, 2.0, 4.0]),
            ("neg".to_string(), vec![-1.0, -2.0, -3.0]),
        ];
        let m = correlate_methods(&entries).unwrap();
        assert_eq!(m.values[0][0], Some(1.0));
        assert!((m.values[0][1].unwrap() - 0.981_980_506_061_965_8).abs() < 1e-12);
        assert!((m.values[0][2].unwrap() + 1.0).abs() < 1e-12);
        // Symmetry.
        assert_eq!(m.values[0][1], m.values[1][0]);
    }

    #[test]
    fn zero_variance_vector_is_marked_undefined() {
        let entries = vec![
            ("a".to_string(), vec![1.0, 2.0, 3.0]),
            ("flat".to_string(), vec![5.0, 5.0, 5.0]),
        ];
        let m = correlate_methods(&entries).unwrap();
        assert_eq!(m.values[0][1], None);
        assert_eq!(m.values[1][1], None);
        assert_eq!(m.values[0][0], Some(1.0));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn correlation_matrix_is_positive_semidefinite() {
        // Jacobi eigenvalues of the 4×4 correlation matrix stay above −1e−10.
        let mut rng = crate::rng::seeded_rng(37);
        let n = 300;
        let base: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let entries: Vec<(String, Vec<f64>)> = (0..4)
            .map(|k| {
                let v: Vec<f64> = base
                    .iter()
                    .map(|&b| 0.7 * b + 0.5 * rng.sample::<f64, _>(StandardNormal) + 0.1 * k as f64)
                    .collect();
                (format!("m{k}"), v)
            })
            .collect();
        let m = correlate_methods(&entries).unwrap();
        let dim = m.labels.len();
        let mut a: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| m.values[i][j].unwrap()).collect())
            .collect();
        // Cyclic Jacobi sweeps.
        for _ in 0..50 {
            for p in 0..dim {
                for q in (p + 1)..dim {
                    if a[p][q].abs() < 1e-14 {
                        continue;
                    }
                    let theta = 0.5 * (2.0 * a[p][q]).atan2(a[q][q] - a[p][p]);
                    let (s, c) = theta.sin_cos();
                    for k in 0..dim {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..dim {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        for i in 0..dim {
            assert!(a[i][i] > -1e-10, "eigenvalue {} at {i}", a[i][i]);
        }
    }
}
