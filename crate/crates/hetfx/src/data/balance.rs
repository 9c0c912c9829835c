//! Standardized differences and the pre-matching balance table.

use crate::error::{Error, Result};
use crate::stats;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Denominator convention for the standardized difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdDenominator {
    /// sqrt((Var_A + Var_B) / 2) — the documented formula and the default.
    #[default]
    PooledHalf,
    /// sqrt(Var_A + Var_B) — the variant consistent with published balance
    /// tables that disagree with the documented formula; see
    /// [`BALANCE_NOTE`].
    Sum,
}

/// Standardized difference between two samples on a 0–100 scale:
/// `100·|mean_a − mean_b| / denominator`, variances computed with
/// denominator `n − 1`.
pub fn standardized_difference(
    sample_a: &[f64],
    sample_b: &[f64],
    denominator: SdDenominator,
) -> Result<f64> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::InvalidArgument(
            "standardized difference needs non-empty samples".into(),
        ));
    }
    let mean_a = stats::mean(sample_a);
    let mean_b = stats::mean(sample_b);
    let var_a = if sample_a.len() > 1 { stats::variance(sample_a, 1) } else { 0.0 };
    let var_b = if sample_b.len() > 1 { stats::variance(sample_b, 1) } else { 0.0 };
    let denom_sq = match denominator {
        SdDenominator::PooledHalf => 0.5 * (var_a + var_b),
        SdDenominator::Sum => var_a + var_b,
    };
    if denom_sq <= 0.0 {
        if mean_a == mean_b {
            return Ok(0.0);
        }
        return Err(Error::Degenerate(
            "zero pooled variance with unequal means: standardized difference is undefined".into(),
        ));
    }
    Ok(100.0 * (mean_a - mean_b).abs() / denom_sq.sqrt())
}

/// Recorded rationale for exposing both denominator conventions.
pub const BALANCE_NOTE: &str = "std_diff uses sqrt((Var_A+Var_B)/2); std_diff_alt uses \
sqrt(Var_A+Var_B). Published balance tables in this literature are internally inconsistent \
between the two conventions, so both are reported.";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BalanceRow {
    pub name: String,
    pub mean_treated: f64,
    pub sd_treated: f64,
    pub mean_control: f64,
    pub sd_control: f64,
    /// Pooled-half denominator (default convention).
    pub std_diff: f64,
    /// Sum denominator variant.
    pub std_diff_alt: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
    pub note: String,
}

/// Per-variable balance of `columns` between treated and control rows.
pub fn balance_report(
    columns: &Array2<f64>,
    names: &[String],
    treatment: &[bool],
) -> Result<BalanceReport> {
    if names.len() != columns.ncols() {
        return Err(Error::InvalidArgument("name count must match column count".into()));
    }
    if treatment.len() != columns.nrows() {
        return Err(Error::InvalidArgument("treatment length must match row count".into()));
    }
    let mut rows = Vec::with_capacity(columns.ncols());
    for (j, name) in names.iter().enumerate() {
        let a: Vec<f64> = (0..columns.nrows())
            .filter(|&i| treatment[i])
            .map(|i| columns[(i, j)])
            .collect();
        let b: Vec<f64> = (0..columns.nrows())
            .filter(|&i| !treatment[i])
            .map(|i| columns[(i, j)])
            .collect();
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidArgument("both treatment groups must be non-empty".into()));
        }
        let var_a = if a.len() > 1 { stats::variance(&a, 1) } else { 0.0 };
        let var_b = if b.len() > 1 { stats::variance(&b, 1) } else { 0.0 };
        let sd = standardized_difference(&a, &b, SdDenominator::PooledHalf).unwrap_or(f64::NAN);
        let sd_alt = standardized_difference(&a, &b, SdDenominator::Sum).unwrap_or(f64::NAN);
        rows.push(BalanceRow {
            name: name.clone(),
            mean_treated: stats::mean(&a),
            sd_treated: var_a.sqrt(),
            mean_control: stats::mean(&b),
            sd_control: var_b.sqrt(),
            std_diff: sd,
            std_diff_alt: sd_alt,
        });
    }
    Ok(BalanceReport {
        rows,
        note: BALANCE_NOTE.to_string(),
    })
}
