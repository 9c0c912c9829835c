//! Dense least-squares machinery: Householder QR with column pivoting for
//! rank-revealing solves, plus a small Cholesky for symmetric positive
//! definite systems (gram/ridge solves).
//!
//! Columns are equilibrated to unit norm before pivoting so that rank
//! decisions measure linear dependence rather than raw scale; expanded
//! feature designs routinely mix O(1) and O(x^4) columns.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Default relative tolerance for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Lstsq {
    /// Coefficients over all input columns; dropped columns hold exact zero.
    pub coefficients: Array1<f64>,
    /// Column indices retained in the solve, ascending.
    pub kept: Vec<usize>,
    /// Column indices dropped as (near-)linearly dependent or zero, ascending.
    pub dropped: Vec<usize>,
    pub rank: usize,
}

/// Minimize ||a·beta - y||_2 with rank-revealing column pivoting.
///
/// Columns whose residual norm (after projection on the pivots chosen so
/// far) falls below `rank_tol` relative to their equilibrated unit norm are
/// dropped and get a zero coefficient.
pub fn lstsq(a: ArrayView2<f64>, y: ArrayView1<f64>, rank_tol: f64) -> Lstsq {
    let n = a.nrows();
    let p = a.ncols();
    assert_eq!(y.len(), n, "rhs length must match row count");

    // Equilibrate columns to unit norm; zero columns are dropped outright.
    let mut scale = vec![0.0f64; p];
    let mut work = Array2::<f64>::zeros((n, p));
    for j in 0..p {
        let norm = a.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        scale[j] = norm;
        if norm > 0.0 {
            for i in 0..n {
                work[(i, j)] = a[(i, j)] / norm;
            }
        }
    }
    let mut rhs: Array1<f64> = y.to_owned();

    let mut perm: Vec<usize> = (0..p).collect();
    let max_rank = n.min(p);
    let mut rank = 0;

    for k in 0..max_rank {
        // Exact remaining column norms; norm downdating can lose accuracy
        // near rank decisions.
        let mut best_j = k;
        let mut best_sq = -1.0f64;
        for j in k..p {
            if scale[perm[j]] == 0.0 {
                continue;
            }
            let sq: f64 = (k..n).map(|i| work[(i, j)] * work[(i, j)]).sum();
            if sq > best_sq {
                best_sq = sq;
                best_j = j;
            }
        }
        if best_sq <= rank_tol * rank_tol {
            break;
        }
        if best_j != k {
            perm.swap(k, best_j);
            for i in 0..n {
                work.swap((i, k), (i, best_j));
            }
        }

        // Householder reflector for column k, rows k..n.
        let normx = best_sq.sqrt();
        let alpha = if work[(k, k)] >= 0.0 { -normx } else { normx };
        let mut v: Vec<f64> = (k..n).map(|i| work[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        if vnorm_sq > 0.0 {
            let tau = 2.0 / vnorm_sq;
            for j in (k + 1)..p {
                let dot: f64 = (k..n).map(|i| v[i - k] * work[(i, j)]).sum();
                let f = tau * dot;
                for i in k..n {
                    work[(i, j)] -= f * v[i - k];
                }
            }
            let dot: f64 = (k..n).map(|i| v[i - k] * rhs[i]).sum();
            let f = tau * dot;
            for i in k..n {
                rhs[i] -= f * v[i - k];
            }
        }
        work[(k, k)] = alpha;
        for i in (k + 1)..n {
            work[(i, k)] = 0.0;
        }
        rank = k + 1;
    }

    // Back substitution on the leading rank×rank triangle.
    let mut beta_perm = vec![0.0f64; rank];
    for k in (0..rank).rev() {
        let mut s = rhs[k];
        for j in (k + 1)..rank {
            s -= work[(k, j)] * beta_perm[j];
        }
        beta_perm[k] = s / work[(k, k)];
    }

    let mut coefficients = Array1::<f64>::zeros(p);
    let mut kept: Vec<usize> = Vec::with_capacity(rank);
    for k in 0..rank {
        let col = perm[k];
        coefficients[col] = beta_perm[k] / scale[col];
        kept.push(col);
    }
    kept.sort_unstable();
    let mut dropped: Vec<usize> = perm[rank..].to_vec();
    dropped.sort_unstable();

    Lstsq {
        coefficients,
        kept,
        dropped,
        rank,
    }
}

/// Weighted least squares: minimize sum_i w_i (y_i - a_i·beta)^2.
/// Weights must be nonnegative.
pub fn weighted_lstsq(
    a: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: &[f64],
    rank_tol: f64,
) -> Lstsq {
    let n = a.nrows();
    assert_eq!(weights.len(), n);
    let mut scaled = a.to_owned();
    let mut ys = y.to_owned();
    for i in 0..n {
        let s = weights[i].sqrt();
        for j in 0..a.ncols() {
            scaled[(i, j)] *= s;
        }
        ys[i] *= s;
    }
    lstsq(scaled.view(), ys.view(), rank_tol)
}

/// Solve a symmetric positive definite system via Cholesky.
/// Returns `None` when the matrix is not numerically positive definite.
pub fn solve_spd(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    for k in 0..n {
        let mut d = a[(k, k)];
        for j in 0..k {
            d -= a[(k, j)] * a[(k, j)];
        }
        if d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        a[(k, k)] = d;
        for i in (k + 1)..n {
            let mut s = a[(i, k)];
            for j in 0..k {
                s -= a[(i, j)] * a[(k, j)];
            }
            a[(i, k)] = s / d;
        }
    }
    // Forward substitution L z = b.
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= a[(i, j)] * b[j];
        }
        b[i] = s / a[(i, i)];
    }
    // Back substitution L' x = z.
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= a[(j, i)] * b[j];
        }
        b[i] = s / a[(i, i)];
    }
    Some(b)
}
