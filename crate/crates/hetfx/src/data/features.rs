//! Heterogeneity-feature construction and screening.
//!
//! Expansion builds, in a fixed deterministic order: the constant, the raw
//! levels, all pairwise interactions of distinct raw columns, powers of
//! non-binary columns, and logs of strictly positive non-binary columns.
//! Binary columns are excluded from powers (idempotent) and logs (undefined).
//!
//! Screening drops binary columns that are nearly one-sided within the
//! treated or within the control group, and among highly correlated pairs
//! keeps the column that appears first.

use crate::error::{Error, Result};
use crate::stats;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariableKind {
    Binary,
    Continuous,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Raw variable names with their kind, in design order.
    pub variables: Vec<(String, VariableKind)>,
    /// 1 = levels only, 2 = add pairwise interactions.
    pub interaction_order: u32,
    /// Highest power of non-binary columns, 1..=4.
    pub polynomial_order: u32,
    /// Add log(v) for non-binary columns with strictly positive minimum.
    pub log_transform: bool,
    /// Minimum share of 0s and of 1s a binary column must show within each
    /// treatment group to survive screening.
    pub share_min: f64,
    /// Keep only one column of any pair with |correlation| above this.
    pub corr_max: f64,
}

impl FeatureSpec {
    pub fn new(variables: Vec<(String, VariableKind)>) -> Self {
        Self {
            variables,
            interaction_order: 2,
            polynomial_order: 4,
            log_transform: true,
            share_min: 0.01,
            corr_max: 0.99,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.polynomial_order) {
            return Err(Error::InvalidArgument(format!(
                "polynomial_order must be in 1..=4, got {}",
                self.polynomial_order
            )));
        }
        if !(1..=2).contains(&self.interaction_order) {
            return Err(Error::InvalidArgument(format!(
                "interaction_order must be 1 or 2, got {}",
                self.interaction_order
            )));
        }
        if !(self.share_min > 0.0 && self.share_min < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "share_min must lie in (0, 0.5), got {}",
                self.share_min
            )));
        }
        if !(self.corr_max > 0.0 && self.corr_max <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "corr_max must lie in (0, 1], got {}",
                self.corr_max
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ExpandedFeatures {
    /// Expanded design with the constant as column 0.
    pub matrix: Array2<f64>,
    pub names: Vec<String>,
    /// Skipped transforms (e.g. log of a column with nonpositive values).
    pub warnings: Vec<String>,
}

/// Deterministic column order: constant, levels, interactions (lexicographic
/// by index pair), polynomials (by variable, then power), logs.
pub fn expand_features(raw: &Array2<f64>, spec: &FeatureSpec) -> Result<ExpandedFeatures> {
    spec.validate()?;
    let n = raw.nrows();
    let k = raw.ncols();
    if k != spec.variables.len() {
        return Err(Error::InvalidArgument(format!(
            "raw matrix has {k} columns but spec names {} variables",
            spec.variables.len()
        )));
    }
    for (j, (name, kind)) in spec.variables.iter().enumerate() {
        if *kind == VariableKind::Binary {
            if let Some(i) = (0..n).find(|&i| raw[(i, j)] != 0.0 && raw[(i, j)] != 1.0) {
                return Err(Error::Validation(format!(
                    "variable '{name}' is declared binary but row {i} holds {}",
                    raw[(i, j)]
                )));
            }
        }
    }

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();

    columns.push(vec![1.0; n]);
    names.push(super::CONSTANT_NAME.to_string());

    for (j, (name, _)) in spec.variables.iter().enumerate() {
        columns.push(raw.column(j).to_vec());
        names.push(name.clone());
    }

    if spec.interaction_order >= 2 {
        for a in 0..k {
            for b in (a + 1)..k {
                let col: Vec<f64> = (0..n).map(|i| raw[(i, a)] * raw[(i, b)]).collect();
                columns.push(col);
                names.push(format!("{}*{}", spec.variables[a].0, spec.variables[b].0));
            }
        }
    }

    for (j, (name, kind)) in spec.variables.iter().enumerate() {
        if *kind == VariableKind::Binary {
            continue;
        }
        for power in 2..=spec.polynomial_order {
            let col: Vec<f64> = (0..n).map(|i| raw[(i, j)].powi(power as i32)).collect();
            columns.push(col);
            names.push(format!("{name}^{power}"));
        }
    }

    if spec.log_transform {
        for (j, (name, kind)) in spec.variables.iter().enumerate() {
            if *kind == VariableKind::Binary {
                continue;
            }
            let min = raw.column(j).iter().cloned().fold(f64::INFINITY, f64::min);
            if min <= 0.0 {
                warnings.push(format!(
                    "log({name}) skipped: minimum value {min} is not strictly positive"
                ));
                continue;
            }
            let col: Vec<f64> = (0..n).map(|i| raw[(i, j)].ln()).collect();
            columns.push(col);
            names.push(format!("log({name})"));
        }
    }

    let p = columns.len();
    let mut matrix = Array2::<f64>::zeros((n, p));
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            matrix[(i, j)] = v;
        }
    }
    Ok(ExpandedFeatures {
        matrix,
        names,
        warnings,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub index: usize,
    pub name: String,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct ScreenedFeatures {
    pub matrix: Array2<f64>,
    pub names: Vec<String>,
    /// Indices into the input matrix, ascending; always contains 0.
    pub kept: Vec<usize>,
    pub dropped: Vec<DroppedColumn>,
}

/// Screen an expanded design. The constant column (index 0) is always kept.
///
/// A column is binary when all its values are 0 or 1 and both occur; such a
/// column is dropped when the share of 0s or of 1s within the treated group
/// or within the control group falls below `share_min`. Zero-variance
/// non-constant columns are dropped outright (their correlation with other
/// columns is undefined and they duplicate the constant). Among remaining
/// pairs with |Pearson correlation| > `corr_max`, the earlier column wins.
pub fn screen_features(
    z: &Array2<f64>,
    names: &[String],
    spec: &FeatureSpec,
    treatment: &[bool],
) -> Result<ScreenedFeatures> {
    spec.validate()?;
    let n = z.nrows();
    let p = z.ncols();
    if names.len() != p {
        return Err(Error::InvalidArgument("name count must match column count".into()));
    }
    if treatment.len() != n {
        return Err(Error::InvalidArgument("treatment length must match row count".into()));
    }
    let n_treated = treatment.iter().filter(|&&d| d).count();
    let n_control = n - n_treated;
    if n_treated == 0 || n_control == 0 {
        return Err(Error::InvalidArgument("both treatment groups must be non-empty".into()));
    }

    let mut kept: Vec<usize> = vec![0];
    let mut dropped: Vec<DroppedColumn> = Vec::new();

    // Standardized copies of kept non-constant columns for fast correlation.
    let mut zscores: Vec<(usize, Vec<f64>)> = Vec::new();

    for j in 1..p {
        let col = z.column(j).to_owned();
        let mean = stats::mean(col.as_slice().expect("owned column is contiguous"));
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        if var == 0.0 {
            dropped.push(DroppedColumn {
                index: j,
                name: names[j].clone(),
                reason: "zero variance".into(),
            });
            continue;
        }

        let is_binary = col.iter().all(|&v| v == 0.0 || v == 1.0);
        if is_binary {
            let ones_t = (0..n).filter(|&i| treatment[i] && col[i] == 1.0).count() as f64;
            let ones_c = (0..n).filter(|&i| !treatment[i] && col[i] == 1.0).count() as f64;
            let shares = [
                ones_t / n_treated as f64,
                1.0 - ones_t / n_treated as f64,
                ones_c / n_control as f64,
                1.0 - ones_c / n_control as f64,
            ];
            if shares.iter().any(|&s| s < spec.share_min) {
                dropped.push(DroppedColumn {
                    index: j,
                    name: names[j].clone(),
                    reason: format!(
                        "binary share below {} within a treatment group",
                        spec.share_min
                    ),
                });
                continue;
            }
        }

        let sd = var.sqrt();
        let zs: Vec<f64> = col.iter().map(|v| (v - mean) / sd).collect();
        let mut conflict: Option<usize> = None;
        for (i_idx, zi) in &zscores {
            let r = zs.iter().zip(zi).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            if r.abs() > spec.corr_max {
                conflict = Some(*i_idx);
                break;
            }
        }
        if let Some(i_idx) = conflict {
            dropped.push(DroppedColumn {
                index: j,
                name: names[j].clone(),
                reason: format!(
                    "|correlation| with earlier column '{}' exceeds {}",
                    names[i_idx], spec.corr_max
                ),
            });
            continue;
        }
        zscores.push((j, zs));
        kept.push(j);
    }

    let mut matrix = Array2::<f64>::zeros((n, kept.len()));
    for (c, &j) in kept.iter().enumerate() {
        for i in 0..n {
            matrix[(i, c)] = z[(i, j)];
        }
    }
    let kept_names = kept.iter().map(|&j| names[j].clone()).collect();
    Ok(ScreenedFeatures {
        matrix,
        names: kept_names,
        kept,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::Rng;

    fn spec(vars: Vec<(&str, VariableKind)>) -> FeatureSpec {
        FeatureSpec::new(
            vars.into_iter()
                .map(|(n, k)| (n.to_string(), k))
                .collect(),
        )
    }

    #[test]
    fn single_binary_variable_expands_to_constant_and_level() {
        let raw = array![[0.0], [1.0], [1.0]];
        let out = expand_features(&raw, &spec(vec![("b", VariableKind::Binary)])).unwrap();
        assert_eq!(out.names, vec!["const", "b"]);
        assert_eq!(out.matrix.ncols(), 2);
    }

    #[test]
    fn two_continuous_positive_variables_order_four() {
        // Enumerated: 1, u, v, u*v, u^2..u^4, v^2..v^4, log u, log v = 12 columns.
        let raw = array![[1.0, 2.0], [2.0, 3.0], [3.0, 1.0]];
        let out = expand_features(
            &raw,
            &spec(vec![("u", VariableKind::Continuous), ("v", VariableKind::Continuous)]),
        )
        .unwrap();
        assert_eq!(
            out.names,
            vec![
                "const", "u", "v", "u*v", "u^2", "u^3", "u^4", "v^2", "v^3", "v^4", "log(u)",
                "log(v)"
            ]
        );
        assert_eq!(out.matrix.ncols(), 12);
        assert!(out.warnings.is_empty());
        // Spot-check a few cells.
        assert_eq!(out.matrix[(1, 3)], 6.0); // u*v
        assert_eq!(out.matrix[(2, 6)], 81.0); // u^4
        assert!((out.matrix[(0, 11)] - (2.0f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn log_of_nonpositive_column_is_skipped_with_warning() {
        let raw = array![[-1.0], [2.0], [3.0]];
        let out = expand_features(&raw, &spec(vec![("u", VariableKind::Continuous)])).unwrap();
        assert!(!out.names.iter().any(|n| n == "log(u)"));
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn misdeclared_binary_is_rejected() {
        let raw = array![[0.0], [2.0]];
        assert!(expand_features(&raw, &spec(vec![("b", VariableKind::Binary)])).is_err());
    }

    #[test]
    fn expansion_is_deterministic() {
        let raw = array![[1.0, 0.0], [2.0, 1.0], [0.5, 1.0]];
        let s = spec(vec![("u", VariableKind::Continuous), ("b", VariableKind::Binary)]);
        let a = expand_features(&raw, &s).unwrap();
        let b = expand_features(&raw, &s).unwrap();
        assert_eq!(a.names, b.names);
        assert_eq!(a.matrix, b.matrix);
    }

    fn screening_spec() -> FeatureSpec {
        spec(vec![("u", VariableKind::Continuous)])
    }

    #[test]
    fn rare_binary_within_treated_is_dropped() {
        // 200 treated (one 1), 200 controls (half 1): share of 1s among
        // treated = 0.5% < 1%.
        let n = 400;
        let mut z = Array2::<f64>::zeros((n, 2));
        let mut treatment = vec![false; n];
        for i in 0..n {
            z[(i, 0)] = 1.0;
            if i < 200 {
                treatment[i] = true;
                z[(i, 1)] = if i == 0 { 1.0 } else { 0.0 };
            } else {
                z[(i, 1)] = if i % 2 == 0 { 1.0 } else { 0.0 };
            }
        }
        let names = vec!["const".to_string(), "rare".to_string()];
        let out = screen_features(&z, &names, &screening_spec(), &treatment).unwrap();
        assert_eq!(out.kept, vec![0]);
        assert_eq!(out.dropped.len(), 1);
        assert!(out.dropped[0].reason.contains("binary share"));
    }

    #[test]
    fn duplicated_column_drops_second_occurrence() {
        let n = 50;
        let mut z = Array2::<f64>::zeros((n, 3));
        let mut treatment = vec![false; n];
        for i in 0..n {
            z[(i, 0)] = 1.0;
            z[(i, 1)] = (i as f64).sin() + 0.1 * i as f64;
            z[(i, 2)] = z[(i, 1)];
            treatment[i] = i % 2 == 0;
        }
        let names = vec!["const".into(), "v".into(), "v_copy".into()];
        let out = screen_features(&z, &names, &screening_spec(), &treatment).unwrap();
        assert_eq!(out.kept, vec![0, 1]);
        assert_eq!(out.dropped[0].index, 2);
        assert!(out.dropped[0].reason.contains("correlation"));
    }

    #[test]
    fn independent_normal_columns_all_survive() {
        // 200 independent standard-normal columns at n = 5000: the largest
        // |pairwise correlation| stays far below 0.99.
        let n = 5000;
        let p = 200;
        let mut rng = crate::rng::seeded_rng(914);
        let mut z = Array2::<f64>::zeros((n, p + 1));
        let mut treatment = vec![false; n];
        for i in 0..n {
            z[(i, 0)] = 1.0;
            treatment[i] = rng.gen::<f64>() < 0.5;
            for j in 1..=p {
                z[(i, j)] = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        let names: Vec<String> = (0..=p)
            .map(|j| if j == 0 { "const".into() } else { format!("g{j}") })
            .collect();
        let out = screen_features(&z, &names, &screening_spec(), &treatment).unwrap();
        assert_eq!(out.kept.len(), p + 1);
        assert!(out.dropped.is_empty());
    }

    #[test]
    fn constant_always_kept_and_output_never_grows() {
        let z = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        let names = vec!["const".to_string(), "flat".to_string()];
        let out = screen_features(&z, &names, &screening_spec(), &[true, false, true]).unwrap();
        assert_eq!(out.kept[0], 0);
        assert!(out.matrix.ncols() <= z.ncols());
        assert_eq!(out.dropped[0].reason, "zero variance");
    }
}
