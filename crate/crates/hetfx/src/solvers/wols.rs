//! Weighted ordinary least squares.

use crate::error::{Error, Result};
use crate::linalg::{self, DEFAULT_RANK_TOL};
use ndarray::{Array1, ArrayView1, ArrayView2};

#[derive(Clone, Debug)]
pub struct WolsFit {
    /// Coefficients over all design columns; dropped columns hold exact zero.
    pub coefficients: Array1<f64>,
    pub kept: Vec<usize>,
    /// Columns dropped as rank-deficient on the weighted support.
    pub dropped: Vec<usize>,
}

impl WolsFit {
    pub fn predict(&self, design: &ArrayView2<f64>) -> Array1<f64> {
        design.dot(&self.coefficients)
    }
}

/// Minimize `sum_i w_i (y_i − design_i·beta)^2`. Weights must be nonnegative
/// and not all zero; rank-deficient columns are dropped (reported, not
/// fatal).
pub fn wols_fit(design: ArrayView2<f64>, y: ArrayView1<f64>, weights: &[f64]) -> Result<WolsFit> {
    if design.nrows() != y.len() || weights.len() != y.len() {
        return Err(Error::InvalidArgument(
            "design, response, and weights must agree on the row count".into(),
        ));
    }
    if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
        return Err(Error::Validation(format!("invalid weight {w}")));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::Degenerate("all weights are zero".into()));
    }
    let fit = linalg::weighted_lstsq(design, y, weights, DEFAULT_RANK_TOL);
    Ok(WolsFit {
        coefficients: fit.coefficients,
        kept: fit.kept,
        dropped: fit.dropped,
    })
}
