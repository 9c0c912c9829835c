//! Weighted LASSO by cyclic coordinate descent with soft-thresholding.
//!
//! The objective is `sum_i w_i (y_i − x_i·beta)^2 + lambda · sum_j
//! loading_j |beta_j|` with the penalty on original-scale coefficients; a
//! loading of zero marks a column as unpenalized. Columns are standardized
//! internally (weighted mean zero and weighted variance one when an
//! unpenalized constant column is present to absorb the centering;
//! rescaled to unit weighted second moment otherwise) and coefficients are
//! reported on the original scale.
//!
//! Soft-thresholding produces exact zeros, so "selected set" membership is
//! a bit-exact notion. Convergence is declared when no coefficient moves by
//! more than `tol` (standardized scale) over a full sweep; warm starts along
//! a descending penalty path share the standardization and gram matrix.

use crate::error::{Error, Result};
use crate::stats;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

#[derive(Clone, Copy, Debug)]
pub struct LassoOptions {
    /// Convergence tolerance on the largest standardized-coefficient change
    /// over a sweep.
    pub tol: f64,
    /// Sweep budget before giving up with a diagnostic error.
    pub max_cycles: usize,
    /// Columns up to this count use a precomputed gram matrix; larger
    /// problems update residuals directly.
    pub gram_limit: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_cycles: 200_000,
            gram_limit: 600,
        }
    }
}

/// Standardized view of a weighted design shared across a penalty path.
pub(crate) struct CdProblem {
    n: usize,
    p: usize,
    /// Original column index per coordinate participating in descent.
    active: Vec<usize>,
    xs: Array2<f64>,
    y_tilde: Array1<f64>,
    weights: Vec<f64>,
    scale: Vec<f64>,
    mean: Vec<f64>,
    y_mean: f64,
    /// Unpenalized constant column absorbing the centering, with its value.
    intercept: Option<(usize, f64)>,
    gram: Option<(Array2<f64>, Array1<f64>)>,
    /// sum_i w_i y_tilde_i^2, for objective bookkeeping.
    sse0: f64,
}

impl CdProblem {
    pub(crate) fn new(
        design: ArrayView2<f64>,
        y: ArrayView1<f64>,
        weights: &[f64],
        loadings: &[f64],
        opts: &LassoOptions,
    ) -> Result<Self> {
        let n = design.nrows();
        let p = design.ncols();
        if y.len() != n || weights.len() != n {
            return Err(Error::InvalidArgument(
                "design, response, and weights must agree on the row count".into(),
            ));
        }
        if loadings.len() != p {
            return Err(Error::InvalidArgument("one penalty loading per column required".into()));
        }
        if let Some(l) = loadings.iter().find(|l| **l < 0.0 || !l.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid penalty loading {l}")));
        }
        if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
            return Err(Error::Validation(format!("invalid weight {w}")));
        }
        let total_weight = stats::kahan_sum(weights.iter().copied());
        if total_weight <= 0.0 {
            return Err(Error::Degenerate("all weights are zero".into()));
        }

        // Column moments.
        let mut m1 = vec![0.0f64; p];
        let mut m2 = vec![0.0f64; p];
        let mut var = vec![0.0f64; p];
        for j in 0..p {
            let col = design.column(j);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for (i, &w) in weights.iter().enumerate() {
                s1 += w * col[i];
                s2 += w * col[i] * col[i];
            }
            m1[j] = s1 / total_weight;
            m2[j] = s2 / total_weight;
            let mut sv = 0.0;
            for (i, &w) in weights.iter().enumerate() {
                let d = col[i] - m1[j];
                sv += w * d * d;
            }
            var[j] = sv / total_weight;
        }
        let zero_var = |j: usize| var[j] <= 1e-24 * m2[j].max(1e-300);

        let intercept: Option<(usize, f64)> = (0..p)
            .find(|&j| loadings[j] == 0.0 && zero_var(j) && m2[j] > 0.0)
            .map(|j| (j, m1[j]));
        let centered = intercept.is_some();

        let mut active: Vec<usize> = Vec::with_capacity(p);
        let mut scale = Vec::new();
        let mut mean = Vec::new();
        let intercept_col = intercept.map(|(j, _)| j);
        for j in 0..p {
            if Some(j) == intercept_col {
                continue;
            }
            if centered {
                if zero_var(j) {
                    continue; // redundant with the intercept; coefficient 0
                }
                active.push(j);
                scale.push(var[j].sqrt());
                mean.push(m1[j]);
            } else {
                if m2[j] == 0.0 {
                    continue; // all-zero column
                }
                active.push(j);
                scale.push(m2[j].sqrt());
                mean.push(0.0);
            }
        }

        let y_mean = if centered {
            stats::kahan_sum(weights.iter().zip(y.iter()).map(|(&w, &v)| w * v)) / total_weight
        } else {
            0.0
        };
        let y_tilde: Array1<f64> = Array1::from_iter(y.iter().map(|&v| v - y_mean));

        let pa = active.len();
        let mut xs = Array2::<f64>::zeros((n, pa));
        for (slot, &j) in active.iter().enumerate() {
            for i in 0..n {
                xs[(i, slot)] = (design[(i, j)] - mean[slot]) / scale[slot];
            }
        }

        let gram = if pa <= opts.gram_limit && pa > 0 {
            // G = Xs' diag(w) Xs and c = Xs' diag(w) y via sqrt-weight scaling.
            let mut a = xs.clone();
            let mut yw = y_tilde.clone();
            for i in 0..n {
                let s = weights[i].sqrt();
                for j in 0..pa {
                    a[(i, j)] *= s;
                }
                yw[i] *= s;
            }
            let g = a.t().dot(&a);
            let c = a.t().dot(&yw);
            Some((g, c))
        } else {
            None
        };

        let sse0 = weights
            .iter()
            .zip(y_tilde.iter())
            .map(|(&w, &v)| w * v * v)
            .sum::<f64>();

        Ok(Self {
            n,
            p,
            active,
            xs,
            y_tilde,
            weights: weights.to_vec(),
            scale,
            mean,
            y_mean,
            intercept,
            gram,
            sse0,
        })
    }

    fn penalized_objective(&self, beta: &Array1<f64>, thresholds: &[f64]) -> f64 {
        // Quadratic part plus penalty, on the standardized problem; the
        // per-coordinate threshold is lambda·loading/(2·scale), so the
        // penalty equals sum_j 2·t_j·|beta_j|.
        let quad = match &self.gram {
            Some((g, c)) => {
                let gb = g.dot(beta);
                self.sse0 - 2.0 * c.dot(beta) + beta.dot(&gb)
            }
            None => {
                let fitted = self.xs.dot(beta);
                self.weights
                    .iter()
                    .zip(self.y_tilde.iter())
                    .zip(fitted.iter())
                    .map(|((&w, &y), &f)| w * (y - f) * (y - f))
                    .sum()
            }
        };
        let penalty: f64 = beta
            .iter()
            .zip(thresholds)
            .map(|(&b, &t)| 2.0 * t * b.abs())
            .sum();
        quad + penalty
    }

    /// Run coordinate descent at one penalty, warm-started from `beta`
    /// (standardized scale, over active coordinates).
    fn solve(
        &self,
        lambda: f64,
        loadings: &[f64],
        beta: &mut Array1<f64>,
        opts: &LassoOptions,
    ) -> Result<()> {
        let pa = self.active.len();
        if pa == 0 {
            return Ok(());
        }
        let thresholds: Vec<f64> = self
            .active
            .iter()
            .zip(&self.scale)
            .map(|(&j, &s)| lambda * loadings[j] / (2.0 * s))
            .collect();

        // Per-coordinate curvature a_j = sum w x~^2; equals the total
        // weight up to rounding, taken from the data rather than assumed.
        let a: Vec<f64> = match &self.gram {
            Some((g, _)) => (0..pa).map(|j| g[(j, j)]).collect(),
            None => (0..pa)
                .map(|j| {
                    self.weights
                        .iter()
                        .enumerate()
                        .map(|(i, &w)| w * self.xs[(i, j)] * self.xs[(i, j)])
                        .sum()
                })
                .collect(),
        };

        // State for the two update strategies.
        let mut q: Option<Array1<f64>> = self.gram.as_ref().map(|(g, _)| g.dot(&*beta));
        let mut resid: Option<Array1<f64>> = if self.gram.is_none() {
            Some(&self.y_tilde - &self.xs.dot(&*beta))
        } else {
            None
        };

        let mut cycles = 0usize;
        #[cfg(debug_assertions)]
        let mut prev_obj = f64::INFINITY;

        let sweep = |coords: &[usize],
                         beta: &mut Array1<f64>,
                         q: &mut Option<Array1<f64>>,
                         resid: &mut Option<Array1<f64>>|
         -> f64 {
            let mut max_change = 0.0f64;
            for &j in coords {
                let old = beta[j];
                let rho = match (&self.gram, q.as_ref()) {
                    (Some((_, c)), Some(qv)) => c[j] - qv[j] + a[j] * old,
                    _ => {
                        let r = resid.as_ref().expect("residual state");
                        let mut s = 0.0;
                        for (i, &w) in self.weights.iter().enumerate() {
                            s += w * self.xs[(i, j)] * r[i];
                        }
                        s + a[j] * old
                    }
                };
                let t = thresholds[j];
                let new = if t == 0.0 {
                    rho / a[j]
                } else if rho > t {
                    (rho - t) / a[j]
                } else if rho < -t {
                    (rho + t) / a[j]
                } else {
                    0.0
                };
                if new != old {
                    let delta = new - old;
                    beta[j] = new;
                    max_change = max_change.max(delta.abs());
                    match (&self.gram, q.as_mut()) {
                        (Some((g, _)), Some(qv)) => {
                            for k in 0..pa {
                                qv[k] += g[(k, j)] * delta;
                            }
                        }
                        _ => {
                            let r = resid.as_mut().expect("residual state");
                            for i in 0..self.n {
                                r[i] -= self.xs[(i, j)] * delta;
                            }
                        }
                    }
                }
            }
            max_change
        };

        let all: Vec<usize> = (0..pa).collect();
        loop {
            // Full sweep.
            let change = sweep(&all, beta, &mut q, &mut resid);
            cycles += 1;
            #[cfg(debug_assertions)]
            {
                let obj = self.penalized_objective(beta, &thresholds);
                debug_assert!(
                    obj <= prev_obj * (1.0 + 1e-12) + 1e-12,
                    "coordinate descent objective increased: {prev_obj} -> {obj}"
                );
                prev_obj = obj;
            }
            if change < opts.tol {
                return Ok(());
            }
            if cycles >= opts.max_cycles {
                return Err(Error::NoConvergence {
                    iterations: cycles,
                    criterion: change,
                    tolerance: opts.tol,
                });
            }
            // Inner sweeps over the current active set.
            let nonzero: Vec<usize> = (0..pa)
                .filter(|&j| beta[j] != 0.0 || thresholds[j] == 0.0)
                .collect();
            loop {
                let change = sweep(&nonzero, beta, &mut q, &mut resid);
                cycles += 1;
                #[cfg(debug_assertions)]
                {
                    let obj = self.penalized_objective(beta, &thresholds);
                    debug_assert!(
                        obj <= prev_obj * (1.0 + 1e-12) + 1e-12,
                        "coordinate descent objective increased: {prev_obj} -> {obj}"
                    );
                    prev_obj = obj;
                }
                if change < opts.tol {
                    break;
                }
                if cycles >= opts.max_cycles {
                    return Err(Error::NoConvergence {
                        iterations: cycles,
                        criterion: change,
                        tolerance: opts.tol,
                    });
                }
            }
        }
    }

    /// Map standardized coefficients back to the original scale, filling the
    /// intercept and excluded columns.
    fn unstandardize(&self, beta_std: &Array1<f64>) -> Array1<f64> {
        let mut out = Array1::<f64>::zeros(self.p);
        for (slot, &j) in self.active.iter().enumerate() {
            out[j] = beta_std[slot] / self.scale[slot];
        }
        if let Some((j, value)) = self.intercept {
            let mut adj = self.y_mean;
            for (slot, _) in self.active.iter().enumerate() {
                adj -= self.mean[slot] * beta_std[slot] / self.scale[slot];
            }
            out[j] = adj / value;
        }
        out
    }

}

/// Solve the weighted LASSO path at the given penalties (descending order
/// recommended; each solution warm-starts the next). Returns original-scale
/// coefficient vectors aligned with the penalty sequence.
pub fn lasso_path(
    design: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: &[f64],
    lambdas: &[f64],
    loadings: &[f64],
    opts: &LassoOptions,
) -> Result<Vec<Array1<f64>>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty penalty sequence".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| **l < 0.0 || !l.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid penalty {l}")));
    }
    let problem = CdProblem::new(design, y, weights, loadings, opts)?;
    let mut beta_std = Array1::<f64>::zeros(problem.active.len());
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        problem.solve(lambda, loadings, &mut beta_std, opts)?;
        out.push(problem.unstandardize(&beta_std));
    }
    Ok(out)
}

/// Single-penalty convenience wrapper around [`lasso_path`].
pub fn weighted_lasso(
    design: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: &[f64],
    lambda: f64,
    loadings: &[f64],
    opts: &LassoOptions,
) -> Result<Array1<f64>> {
    Ok(lasso_path(design, y, weights, &[lambda], loadings, opts)?.remove(0))
}

/// Smallest penalty for which every penalized coefficient is exactly zero:
/// with `r` the weighted residual of `y` on the unpenalized block,
/// `lambda_max = max_j 2·|sum_i w_i x_ij r_i| / loading_j` over penalized
/// columns (the stationarity threshold of the penalized objective).
pub fn lambda_max(
    design: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: &[f64],
    loadings: &[f64],
) -> Result<f64> {
    let p = design.ncols();
    if loadings.len() != p {
        return Err(Error::InvalidArgument("one penalty loading per column required".into()));
    }
    let unpenalized: Vec<usize> = (0..p).filter(|&j| loadings[j] == 0.0).collect();
    if unpenalized.len() == p {
        return Ok(0.0);
    }
    let resid: Array1<f64> = if unpenalized.is_empty() {
        y.to_owned()
    } else {
        let mut sub = Array2::<f64>::zeros((design.nrows(), unpenalized.len()));
        for (c, &j) in unpenalized.iter().enumerate() {
            for i in 0..design.nrows() {
                sub[(i, c)] = design[(i, j)];
            }
        }
        let fit = super::wols_fit(sub.view(), y, weights)?;
        &y.to_owned() - &sub.dot(&fit.coefficients)
    };
    let mut best = 0.0f64;
    for j in 0..p {
        if loadings[j] == 0.0 {
            continue;
        }
        let mut s = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            s += w * design[(i, j)] * resid[i];
        }
        best = best.max(2.0 * s.abs() / loadings[j]);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::wols_fit;
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_problem(n: usize, p: usize, seed: u64) -> (Array2<f64>, Array1<f64>, Vec<f64>) {
        let mut rng = crate::rng::seeded_rng(seed);
        let mut x = Array2::<f64>::ones((n, p));
        for i in 0..n {
            for j in 1..p {
                x[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let y = Array1::from_iter((0..n).map(|i| {
            0.5 + 1.5 * x[(i, 1)] - 0.7 * x[(i, 2)] + rng.sample::<f64, _>(StandardNormal)
        }));
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        (x, y, w)
    }

    fn unit_loadings(p: usize) -> Vec<f64> {
        let mut l = vec![1.0; p];
        l[0] = 0.0;
        l
    }

    #[test]
    fn zero_penalty_matches_wols() {
        let (x, y, w) = random_problem(300, 6, 21);
        let loadings = unit_loadings(6);
        let lasso = weighted_lasso(x.view(), y.view(), &w, 0.0, &loadings, &LassoOptions::default())
            .unwrap();
        let ols = wols_fit(x.view(), y.view(), &w).unwrap();
        for j in 0..6 {
            let denom = ols.coefficients[j].abs().max(1.0);
            assert!(
                (lasso[j] - ols.coefficients[j]).abs() / denom < 1e-6,
                "column {j}: {} vs {}",
                lasso[j],
                ols.coefficients[j]
            );
        }
    }

    #[test]
    fn kkt_threshold_kills_all_penalized_coefficients() {
        let (x, y, w) = random_problem(200, 5, 33);
        let loadings = unit_loadings(5);
        let lmax = lambda_max(x.view(), y.view(), &w, &loadings).unwrap();
        for factor in [1.0, 1.5, 10.0] {
            let beta = weighted_lasso(
                x.view(),
                y.view(),
                &w,
                lmax * factor,
                &loadings,
                &LassoOptions::default(),
            )
            .unwrap();
            for j in 1..5 {
                assert_eq!(beta[j], 0.0, "factor {factor}, column {j}");
            }
            assert!(beta[0] != 0.0);
        }
        // Just below the threshold at least one coefficient turns on.
        let beta = weighted_lasso(
            x.view(),
            y.view(),
            &w,
            lmax * 0.99,
            &loadings,
            &LassoOptions::default(),
        )
        .unwrap();
        assert!((1..5).any(|j| beta[j] != 0.0));
    }

    #[test]
    fn orthonormal_column_soft_threshold_closed_form() {
        // Intercept plus one orthonormal penalized column, unit weights:
        // beta = sign(b_ols)·max(|b_ols| − lambda/2, 0).
        let n = 8;
        let mut x = Array2::<f64>::ones((n, 2));
        // Column orthogonal to the intercept with unit sum of squares.
        let raw: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let norm = (n as f64).sqrt();
        for i in 0..n {
            x[(i, 1)] = raw[i] / norm;
        }
        let y = Array1::from_iter((0..n).map(|i| 2.0 + 3.0 * x[(i, 1)]));
        let w = vec![1.0; n];
        let loadings = unit_loadings(2);
        let b_ols = wols_fit(x.view(), y.view(), &w).unwrap().coefficients[1];
        for lambda in [0.5, 2.0, 5.9, 6.1, 20.0] {
            let beta =
                weighted_lasso(x.view(), y.view(), &w, lambda, &loadings, &LassoOptions::default())
                    .unwrap();
            let expected = b_ols.signum() * (b_ols.abs() - lambda / 2.0).max(0.0);
            assert!(
                (beta[1] - expected).abs() < 1e-8,
                "lambda {lambda}: {} vs {expected}",
                beta[1]
            );
        }
    }

    #[test]
    fn gram_and_residual_modes_agree() {
        let (x, y, w) = random_problem(150, 8, 55);
        let loadings = unit_loadings(8);
        let lmax = lambda_max(x.view(), y.view(), &w, &loadings).unwrap();
        let gram_opts = LassoOptions::default();
        let naive_opts = LassoOptions {
            gram_limit: 0,
            ..LassoOptions::default()
        };
        for lambda in [0.0, 0.01 * lmax, 0.3 * lmax] {
            let a = weighted_lasso(x.view(), y.view(), &w, lambda, &loadings, &gram_opts).unwrap();
            let b = weighted_lasso(x.view(), y.view(), &w, lambda, &loadings, &naive_opts).unwrap();
            for j in 0..8 {
                assert!((a[j] - b[j]).abs() < 1e-7, "lambda {lambda} col {j}");
            }
        }
    }

    #[test]
    fn path_is_continuous_in_lambda() {
        let (x, y, w) = random_problem(250, 7, 77);
        let loadings = unit_loadings(7);
        let lmax = lambda_max(x.view(), y.view(), &w, &loadings).unwrap();
        let grid: Vec<f64> = (0..20).map(|k| lmax * 0.9f64.powi(k)).collect();
        let path = lasso_path(x.view(), y.view(), &w, &grid, &loadings, &LassoOptions::default())
            .unwrap();
        // At grid midpoints the solution must approach the endpoint
        // solution as epsilon shrinks: the gap contracts with eps and is
        // negligible at eps = 1e-5·lambda.
        for k in [3usize, 10, 15] {
            let lam = grid[k];
            let gap_at = |eps: f64| -> f64 {
                let near = weighted_lasso(
                    x.view(),
                    y.view(),
                    &w,
                    lam + eps,
                    &loadings,
                    &LassoOptions::default(),
                )
                .unwrap();
                (0..7).map(|j| (near[j] - path[k][j]).abs()).fold(0.0, f64::max)
            };
            let coarse = gap_at(lam * 1e-3);
            let fine = gap_at(lam * 1e-5);
            assert!(
                fine <= coarse * 0.2 + 1e-9,
                "gap did not contract: {coarse} -> {fine} at lambda {lam}"
            );
            assert!(fine < 1e-4, "gap {fine} too large at lambda {lam}");
        }
    }

    #[test]
    fn no_intercept_design_is_not_centered() {
        // Column of ±1/2 (a transformed treatment flag) with no constant:
        // centering would change the objective; the solver must not center.
        let n = 40;
        let mut rng = crate::rng::seeded_rng(3);
        let mut x = Array2::<f64>::zeros((n, 2));
        let mut y = Array1::<f64>::zeros(n);
        for i in 0..n {
            let t: f64 = if rng.gen::<bool>() { 0.5 } else { -0.5 };
            x[(i, 0)] = t;
            x[(i, 1)] = t * rng.sample::<f64, _>(StandardNormal);
            y[i] = 1.4 * x[(i, 0)] - 0.6 * x[(i, 1)] + 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        let w = vec![1.0; n];
        let loadings = vec![0.0, 1.0];
        let beta =
            weighted_lasso(x.view(), y.view(), &w, 0.0, &loadings, &LassoOptions::default())
                .unwrap();
        let ols = wols_fit(x.view(), y.view(), &w).unwrap();
        for j in 0..2 {
            assert!((beta[j] - ols.coefficients[j]).abs() < 1e-7);
        }
    }

    #[test]
    fn redundant_constant_column_gets_zero() {
        let n = 30;
        let mut x = Array2::<f64>::ones((n, 3));
        let mut rng = crate::rng::seeded_rng(9);
        for i in 0..n {
            x[(i, 2)] = rng.sample::<f64, _>(StandardNormal);
        }
        // Column 1 duplicates the constant.
        let y = Array1::from_iter((0..n).map(|i| 1.0 + x[(i, 2)]));
        let w = vec![1.0; n];
        let loadings = vec![0.0, 1.0, 1.0];
        let beta =
            weighted_lasso(x.view(), y.view(), &w, 0.1, &loadings, &LassoOptions::default())
                .unwrap();
        assert_eq!(beta[1], 0.0);
    }
}
