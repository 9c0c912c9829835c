//! Penalty selection by K-fold cross-validation scored on Post-LASSO error.
//!
//! Folds are cluster-respecting: whole clusters are shuffled and assigned
//! greedily to the lightest fold, so the CV criterion matches the clustered
//! sampling structure. For every candidate penalty the LASSO is fit on the
//! training folds, the selected set is refit unpenalized (Post-LASSO), and
//! the held-out weighted squared error of the refit scores the penalty. The
//! penalty minimizing the mean held-out error wins; ties go to the largest
//! penalty.

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};
use crate::solvers::lasso::{lambda_max, lasso_path, LassoOptions};
use crate::solvers::wols::wols_fit;
use crate::{linalg, stats};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda: f64,
    pub mean_mse: f64,
    pub fold_mses: Vec<f64>,
    /// Size of the selected set on the full-data path at this penalty.
    pub n_selected: usize,
}

/// Outcome of cross-validated LASSO selection.
#[derive(Clone, Debug)]
pub struct LassoFit {
    pub lambda: f64,
    /// LASSO coefficients at the chosen penalty (original scale).
    pub coefficients: Array1<f64>,
    /// Unpenalized column indices (always includes the constant).
    pub unpenalized: Vec<usize>,
    /// Penalized columns with nonzero LASSO coefficient, ascending.
    pub selected: Vec<usize>,
    /// Unpenalized refit over selected ∪ unpenalized; other entries zero.
    pub post_lasso: Array1<f64>,
    pub cv_table: Vec<CvRow>,
}

/// How per-column penalty loadings are produced.
#[derive(Clone, Debug)]
pub enum LoadingMode {
    /// Loading one for every penalized column.
    Unit,
    /// Zou-style adaptive loadings `1/max(|pilot_j|, floor)^gamma` with a
    /// ridge pilot.
    Adaptive { gamma: f64, floor: f64 },
    /// Caller-supplied loadings (zeros are forced on unpenalized columns).
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct CvOptions {
    pub folds: usize,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    /// Explicit penalty grid; overrides the automatic grid when set.
    pub grid: Option<Vec<f64>>,
    pub loading_mode: LoadingMode,
    pub lasso: LassoOptions,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            n_lambda: 100,
            lambda_min_ratio: 1e-4,
            grid: None,
            loading_mode: LoadingMode::Unit,
            // Selection-grade tolerance: set membership and held-out scores
            // are insensitive at this level, and the reported coefficients
            // come from the unpenalized refit.
            lasso: LassoOptions {
                tol: 1e-5,
                ..LassoOptions::default()
            },
            seed: 0,
        }
    }
}

/// Adaptive-LASSO loadings from pilot coefficients: `1/max(|init|, floor)^gamma`
/// for penalized columns, zero for unpenalized ones.
pub fn adaptive_loadings(init: &[f64], gamma: f64, floor: f64, unpenalized: &[usize]) -> Vec<f64> {
    init.iter()
        .enumerate()
        .map(|(j, &b)| {
            if unpenalized.contains(&j) {
                0.0
            } else {
                1.0 / b.abs().max(floor).powf(gamma)
            }
        })
        .collect()
}

/// Ridge fit `argmin sum w (y − Xb)^2 + alpha · sum_{penalized} b_j^2`,
/// used as the adaptive-LASSO pilot (an unpenalized least-squares pilot is
/// unavailable when columns outnumber rows).
pub fn ridge_pilot(
    design: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: &[f64],
    alpha: f64,
    unpenalized: &[usize],
) -> Result<Array1<f64>> {
    let n = design.nrows();
    let p = design.ncols();
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument("ridge penalty must be positive".into()));
    }
    let mut a = design.to_owned();
    let mut yw = y.to_owned();
    for i in 0..n {
        let s = weights[i].sqrt();
        for j in 0..p {
            a[(i, j)] *= s;
        }
        yw[i] *= s;
    }
    let mut gram = a.t().dot(&a);
    let xty = a.t().dot(&yw);
    let jitter = 1e-12 * (0..p).map(|j| gram[(j, j)]).sum::<f64>().max(1e-300) / p as f64;
    for j in 0..p {
        gram[(j, j)] += jitter;
        if !unpenalized.contains(&j) {
            gram[(j, j)] += alpha;
        }
    }
    linalg::solve_spd(gram, xty)
        .ok_or_else(|| Error::Degenerate("ridge system is not positive definite".into()))
}

/// Cluster-respecting fold assignment: distinct clusters are shuffled and
/// assigned greedily to the fold with the fewest observations so far.
/// Returns one fold id per observation.
pub fn cluster_folds(clusters: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut sizes: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for &c in clusters {
        *sizes.entry(c).or_insert(0) += 1;
    }
    let mut order: Vec<usize> = sizes.keys().copied().collect();
    let mut rng = seeded_rng(seed);
    order.shuffle(&mut rng);

    let mut fold_of_cluster: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    let mut fold_sizes = vec![0usize; k];
    for c in order {
        let lightest = (0..k).min_by_key(|&f| (fold_sizes[f], f)).expect("k >= 1");
        fold_of_cluster.insert(c, lightest);
        fold_sizes[lightest] += sizes[&c];
    }
    clusters.iter().map(|c| fold_of_cluster[c]).collect()
}

/// Cholesky factor over a growing subset of gram columns. Appending a
/// column costs O(k^2); removals force a rebuild. Used for the
/// cross-validation scoring refits, where selected sets mostly grow along
/// a descending penalty path.
struct GrowingCholesky<'a> {
    gram: &'a Array2<f64>,
    xty: &'a Array1<f64>,
    order: Vec<usize>,
    /// Row-major lower-triangular factor rows: row k holds k+1 entries.
    factor: Vec<Vec<f64>>,
}

impl<'a> GrowingCholesky<'a> {
    fn new(gram: &'a Array2<f64>, xty: &'a Array1<f64>) -> Self {
        Self {
            gram,
            xty,
            order: Vec::new(),
            factor: Vec::new(),
        }
    }

    /// Append one gram column; `false` when the column is numerically
    /// dependent on the current set (factor left unchanged).
    fn push(&mut self, col: usize) -> bool {
        let k = self.order.len();
        let mut row = vec![0.0f64; k + 1];
        for (i, &oi) in self.order.iter().enumerate() {
            let mut v = self.gram[(oi, col)];
            for (j, &rj) in row.iter().enumerate().take(i) {
                v -= self.factor[i][j] * rj;
            }
            row[i] = v / self.factor[i][i];
        }
        let mut d = self.gram[(col, col)];
        for &rj in row.iter().take(k) {
            d -= rj * rj;
        }
        let tol = 1e-12 * self.gram[(col, col)].max(1e-300);
        if d <= tol {
            return false;
        }
        row[k] = d.sqrt();
        self.factor.push(row);
        self.order.push(col);
        true
    }

    /// Bring the factor to exactly `cols` (sorted). Returns columns that
    /// had to be skipped as dependent.
    fn set_columns(&mut self, cols: &[usize]) -> Vec<usize> {
        let is_prefix_superset = cols.len() >= self.order.len()
            && self
                .order
                .iter()
                .all(|c| cols.binary_search(c).is_ok());
        if !is_prefix_superset {
            self.order.clear();
            self.factor.clear();
        }
        let mut skipped = Vec::new();
        for &c in cols {
            if self.order.contains(&c) {
                continue;
            }
            if !self.push(c) {
                skipped.push(c);
            }
        }
        skipped
    }

    /// Solve for the current columns; coefficients align with `order`.
    fn solve(&self) -> Vec<f64> {
        let k = self.order.len();
        let mut z = vec![0.0f64; k];
        for i in 0..k {
            let mut v = self.xty[self.order[i]];
            for (j, &zj) in z.iter().enumerate().take(i) {
                v -= self.factor[i][j] * zj;
            }
            z[i] = v / self.factor[i][i];
        }
        for i in (0..k).rev() {
            let mut v = z[i];
            for (j, factor_row) in self.factor.iter().enumerate().skip(i + 1) {
                v -= factor_row[i] * z[j];
            }
            z[i] = v / self.factor[i][i];
        }
        z
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

/// Unpenalized refit on `selected ∪ unpenalized`: a weighted least-squares
/// fit over those columns, reported over the full column set (zeros
/// elsewhere). Also returns any columns dropped as rank-deficient, in
/// original indices.
pub fn post_lasso_refit(
    design: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: &[f64],
    selected: &[usize],
    unpenalized: &[usize],
) -> Result<(Array1<f64>, Vec<usize>)> {
    let mut cols: Vec<usize> = unpenalized.iter().chain(selected).copied().collect();
    cols.sort_unstable();
    cols.dedup();
    let mut sub = Array2::<f64>::zeros((design.nrows(), cols.len()));
    for (c, &j) in cols.iter().enumerate() {
        for i in 0..design.nrows() {
            sub[(i, c)] = design[(i, j)];
        }
    }
    let fit = wols_fit(sub.view(), y, weights)?;
    let mut full = Array1::<f64>::zeros(design.ncols());
    for (c, &j) in cols.iter().enumerate() {
        full[j] = fit.coefficients[c];
    }
    let dropped = fit.dropped.iter().map(|&c| cols[c]).collect();
    Ok((full, dropped))
}

fn selected_set(coefs: &Array1<f64>, loadings: &[f64]) -> Vec<usize> {
    coefs
        .iter()
        .enumerate()
        .filter(|(j, &b)| loadings[*j] > 0.0 && b != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Select the penalty by cluster-respecting K-fold cross-validation of the
/// Post-LASSO held-out weighted mean squared error, then fit on the full
/// data at the chosen penalty and refit the selected set unpenalized.
pub fn cross_validate_lambda(
    design: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: &[f64],
    clusters: &[usize],
    unpenalized: &[usize],
    opts: &CvOptions,
) -> Result<LassoFit> {
    let n = design.nrows();
    let p = design.ncols();
    if y.len() != n || weights.len() != n || clusters.len() != n {
        return Err(Error::InvalidArgument(
            "design, response, weights, and clusters must agree on the row count".into(),
        ));
    }
    if opts.folds < 2 {
        return Err(Error::InvalidArgument("cross-validation needs at least 2 folds".into()));
    }
    if let Some(j) = unpenalized.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidArgument(format!("unpenalized column {j} out of range")));
    }

    // Penalty loadings.
    let loadings: Vec<f64> = match &opts.loading_mode {
        LoadingMode::Unit => (0..p)
            .map(|j| if unpenalized.contains(&j) { 0.0 } else { 1.0 })
            .collect(),
        LoadingMode::Fixed(v) => {
            if v.len() != p {
                return Err(Error::InvalidArgument("fixed loadings length mismatch".into()));
            }
            v.iter()
                .enumerate()
                .map(|(j, &l)| if unpenalized.contains(&j) { 0.0 } else { l })
                .collect()
        }
        LoadingMode::Adaptive { gamma, floor } => {
            let unit: Vec<f64> = (0..p)
                .map(|j| if unpenalized.contains(&j) { 0.0 } else { 1.0 })
                .collect();
            let lmax_unit = lambda_max(design, y, weights, &unit)?;
            if lmax_unit == 0.0 {
                unit // nothing to adapt against; degenerate response
            } else {
                let pilot = ridge_pilot(design, y, weights, 1e-3 * lmax_unit, unpenalized)?;
                adaptive_loadings(pilot.as_slice().unwrap(), *gamma, *floor, unpenalized)
            }
        }
    };

    // Penalty grid, descending.
    let grid: Vec<f64> = match &opts.grid {
        Some(g) => {
            if g.is_empty() {
                return Err(Error::InvalidArgument("empty penalty grid".into()));
            }
            if let Some(l) = g.iter().find(|l| **l < 0.0 || !l.is_finite()) {
                return Err(Error::InvalidArgument(format!("invalid grid penalty {l}")));
            }
            let mut g = g.clone();
            g.sort_by(|a, b| b.partial_cmp(a).unwrap());
            g.dedup();
            g
        }
        None => {
            let lmax = lambda_max(design, y, weights, &loadings)?;
            if lmax == 0.0 {
                vec![0.0]
            } else {
                let ratio = opts.lambda_min_ratio;
                let m = opts.n_lambda.max(1);
                (0..m)
                    .map(|i| {
                        if m == 1 {
                            lmax
                        } else {
                            lmax * ratio.powf(i as f64 / (m - 1) as f64)
                        }
                    })
                    .collect()
            }
        }
    };

    // Fold assignment and validation.
    let fold_id = cluster_folds(clusters, opts.folds, derive_seed(opts.seed, "cv-folds", 0));
    for f in 0..opts.folds {
        let mass = stats::kahan_sum(
            weights
                .iter()
                .zip(&fold_id)
                .filter(|(_, &g)| g == f)
                .map(|(&w, _)| w),
        );
        if mass <= 0.0 || mass.is_nan() {
            return Err(Error::Degenerate(format!(
                "cross-validation fold {f} has zero weight mass"
            )));
        }
    }

    // Per-fold Post-LASSO held-out errors, merged by fold index. The
    // scoring refits solve the training-gram normal equations per distinct
    // selected set (with a least-squares fallback when the submatrix is not
    // positive definite); the reported final refit below stays on the
    // rank-revealing least-squares path.
    let fold_results: Vec<Vec<f64>> = (0..opts.folds)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let train: Vec<usize> = (0..n).filter(|&i| fold_id[i] != f).collect();
            let held: Vec<usize> = (0..n).filter(|&i| fold_id[i] == f).collect();
            let x_train = take_rows(&design, &train);
            let y_train = Array1::from_iter(train.iter().map(|&i| y[i]));
            let w_train: Vec<f64> = train.iter().map(|&i| weights[i]).collect();
            let path = lasso_path(
                x_train.view(),
                y_train.view(),
                &w_train,
                &grid,
                &loadings,
                &opts.lasso,
            )?;

            // Weighted gram of the training design for fast scoring refits.
            let (gram, xty) = {
                let mut a = x_train.clone();
                let mut yw = y_train.clone();
                for (r, &wi) in w_train.iter().enumerate() {
                    let sq = wi.sqrt();
                    for c in 0..p {
                        a[(r, c)] *= sq;
                    }
                    yw[r] *= sq;
                }
                (a.t().dot(&a), a.t().dot(&yw))
            };
            let mut refit_cache: std::collections::HashMap<Vec<usize>, Array1<f64>> =
                std::collections::HashMap::new();
            let mut chol = GrowingCholesky::new(&gram, &xty);

            let held_mass =
                stats::kahan_sum(held.iter().map(|&i| weights[i]));
            let mut mses = Vec::with_capacity(grid.len());
            for coefs in &path {
                let selected = selected_set(coefs, &loadings);
                let mut cols: Vec<usize> = unpenalized.iter().chain(&selected).copied().collect();
                cols.sort_unstable();
                cols.dedup();
                let post = match refit_cache.get(&cols) {
                    Some(post) => post.clone(),
                    None => {
                        // Numerically dependent columns (saturated sets at
                        // tiny penalties) are skipped by the factorization
                        // and score with coefficient zero.
                        let _skipped = chol.set_columns(&cols);
                        let beta = chol.solve();
                        let mut full = Array1::<f64>::zeros(p);
                        for (slot, &j) in chol.order.iter().enumerate() {
                            full[j] = beta[slot];
                        }
                        refit_cache.insert(cols, full.clone());
                        full
                    }
                };
                let mut err = 0.0;
                for &i in &held {
                    let mut fitted = 0.0;
                    for j in 0..p {
                        if post[j] != 0.0 {
                            fitted += design[(i, j)] * post[j];
                        }
                    }
                    let r = y[i] - fitted;
                    err += weights[i] * r * r;
                }
                mses.push(err / held_mass);
            }
            Ok(mses)
        })
        .collect::<Result<Vec<_>>>()?;

    // Mean across folds; ties resolve to the largest penalty because the
    // grid is descending and only strict improvement moves the argmin.
    let mut best_idx = 0usize;
    let mut best_mse = f64::INFINITY;
    let mut mean_mses = Vec::with_capacity(grid.len());
    for l in 0..grid.len() {
        let m = stats::mean(&fold_results.iter().map(|fr| fr[l]).collect::<Vec<_>>());
        mean_mses.push(m);
        if m < best_mse {
            best_mse = m;
            best_idx = l;
        }
    }

    // Full-data path (also supplies per-penalty selected sizes for the table).
    let full_path = lasso_path(design, y, weights, &grid, &loadings, &opts.lasso)?;
    let coefficients = full_path[best_idx].clone();
    let selected = selected_set(&coefficients, &loadings);
    let (post_lasso, _) = post_lasso_refit(design, y, weights, &selected, unpenalized)?;

    let cv_table: Vec<CvRow> = grid
        .iter()
        .enumerate()
        .map(|(l, &lambda)| CvRow {
            lambda,
            mean_mse: mean_mses[l],
            fold_mses: fold_results.iter().map(|fr| fr[l]).collect(),
            n_selected: selected_set(&full_path[l], &loadings).len(),
        })
        .collect();

    let mut unpenalized_sorted = unpenalized.to_vec();
    unpenalized_sorted.sort_unstable();
    unpenalized_sorted.dedup();

    Ok(LassoFit {
        lambda: grid[best_idx],
        coefficients,
        unpenalized: unpenalized_sorted,
        selected,
        post_lasso,
        cv_table,
    })
}
