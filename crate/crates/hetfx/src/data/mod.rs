//! Observational dataset model and delimited-text loading.
//!
//! A [`Dataset`] owns one or more outcome columns, a binary treatment flag,
//! a confounder matrix, a heterogeneity design whose first column is the
//! constant, cluster identifiers, and unique observation ids. It is
//! immutable after construction and safe to share across threads.

mod balance;
mod features;
mod pseudo;

pub use balance::{standardized_difference, balance_report, BalanceReport, BalanceRow, SdDenominator};
pub use features::{
    expand_features, screen_features, DroppedColumn, ExpandedFeatures, FeatureSpec, ScreenedFeatures,
    VariableKind,
};
pub use pseudo::{assign_pseudo_starts, PseudoStart};

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub const CONSTANT_NAME: &str = "const";

/// Column-role mapping for [`load_dataset`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataSchema {
    pub treatment: String,
    pub outcomes: Vec<String>,
    pub confounders: Vec<String>,
    #[serde(default)]
    pub heterogeneity: Vec<String>,
    pub cluster: String,
    /// Optional unique-id column; row order is used when absent.
    #[serde(default)]
    pub id: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    outcomes: Array2<f64>,
    outcome_names: Vec<String>,
    treatment: Vec<bool>,
    confounders: Array2<f64>,
    confounder_names: Vec<String>,
    heterogeneity: Array2<f64>,
    heterogeneity_names: Vec<String>,
    cluster_ids: Vec<String>,
    obs_ids: Vec<u64>,
    cluster_index: Vec<usize>,
    n_clusters: usize,
}

impl Dataset {
    /// Validates all structural invariants. `heterogeneity` must already
    /// carry the constant as its first column (use
    /// [`Dataset::with_constant_prepended`] for raw columns).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        outcomes: Array2<f64>,
        outcome_names: Vec<String>,
        treatment: Vec<bool>,
        confounders: Array2<f64>,
        confounder_names: Vec<String>,
        heterogeneity: Array2<f64>,
        heterogeneity_names: Vec<String>,
        cluster_ids: Vec<String>,
        obs_ids: Vec<u64>,
    ) -> Result<Self> {
        let n = treatment.len();
        if n < 2 {
            return Err(Error::Validation(format!(
                "dataset needs at least 2 rows, got {n}"
            )));
        }
        for (what, rows) in [
            ("outcomes", outcomes.nrows()),
            ("confounders", confounders.nrows()),
            ("heterogeneity", heterogeneity.nrows()),
            ("cluster_ids", cluster_ids.len()),
            ("obs_ids", obs_ids.len()),
        ] {
            if rows != n {
                return Err(Error::Validation(format!(
                    "{what} has {rows} rows but treatment has {n}"
                )));
            }
        }
        if outcomes.ncols() == 0 {
            return Err(Error::Validation("at least one outcome column required".into()));
        }
        if outcome_names.len() != outcomes.ncols()
            || confounder_names.len() != confounders.ncols()
            || heterogeneity_names.len() != heterogeneity.ncols()
        {
            return Err(Error::Validation("column name count mismatch".into()));
        }
        let n_treated = treatment.iter().filter(|&&d| d).count();
        if n_treated == 0 || n_treated == n {
            return Err(Error::Validation(
                "dataset needs at least one treated and one control row".into(),
            ));
        }
        if heterogeneity.ncols() == 0 {
            return Err(Error::Validation("heterogeneity must contain the constant column".into()));
        }
        for i in 0..n {
            if heterogeneity[(i, 0)] != 1.0 {
                return Err(Error::Validation(format!(
                    "heterogeneity column 0 must be the constant 1, row {i} has {}",
                    heterogeneity[(i, 0)]
                )));
            }
        }
        for (name, m) in [
            ("outcomes", &outcomes),
            ("confounders", &confounders),
            ("heterogeneity", &heterogeneity),
        ] {
            if let Some(((r, c), v)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "non-finite value {v} in {name} at row {r}, column {c}"
                )));
            }
        }
        let mut seen = HashMap::with_capacity(n);
        for (i, id) in obs_ids.iter().enumerate() {
            if let Some(prev) = seen.insert(*id, i) {
                return Err(Error::Validation(format!(
                    "duplicate obs_id {id} at rows {prev} and {i}"
                )));
            }
        }
        let (cluster_index, n_clusters) = dense_cluster_codes(&cluster_ids);
        Ok(Self {
            outcomes,
            outcome_names,
            treatment,
            confounders,
            confounder_names,
            heterogeneity,
            heterogeneity_names,
            cluster_ids,
            obs_ids,
            cluster_index,
            n_clusters,
        })
    }

    /// Prepend a constant column (and its name) to raw heterogeneity columns.
    pub fn with_constant_prepended(raw: Array2<f64>, names: Vec<String>) -> (Array2<f64>, Vec<String>) {
        let n = raw.nrows();
        let p = raw.ncols();
        let mut z = Array2::<f64>::ones((n, p + 1));
        for i in 0..n {
            for j in 0..p {
                z[(i, j + 1)] = raw[(i, j)];
            }
        }
        let mut all_names = Vec::with_capacity(p + 1);
        all_names.push(CONSTANT_NAME.to_string());
        all_names.extend(names);
        (z, all_names)
    }

    pub fn n(&self) -> usize {
        self.treatment.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.ncols()
    }

    pub fn outcomes(&self) -> &Array2<f64> {
        &self.outcomes
    }

    pub fn outcome(&self, col: usize) -> Array1<f64> {
        self.outcomes.column(col).to_owned()
    }

    pub fn outcome_names(&self) -> &[String] {
        &self.outcome_names
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn confounders(&self) -> &Array2<f64> {
        &self.confounders
    }

    pub fn confounder_names(&self) -> &[String] {
        &self.confounder_names
    }

    pub fn heterogeneity(&self) -> &Array2<f64> {
        &self.heterogeneity
    }

    pub fn heterogeneity_names(&self) -> &[String] {
        &self.heterogeneity_names
    }

    pub fn cluster_ids(&self) -> &[String] {
        &self.cluster_ids
    }

    pub fn obs_ids(&self) -> &[u64] {
        &self.obs_ids
    }

    /// Dense cluster codes in 0..n_clusters, in order of first appearance.
    pub fn cluster_index(&self) -> &[usize] {
        &self.cluster_index
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.treatment[i]).collect()
    }

    pub fn control_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.treatment[i]).collect()
    }

    /// Row subset in the given order. Cluster codes are recomputed densely.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let take = |m: &Array2<f64>| -> Array2<f64> {
            let mut out = Array2::<f64>::zeros((rows.len(), m.ncols()));
            for (r, &i) in rows.iter().enumerate() {
                for c in 0..m.ncols() {
                    out[(r, c)] = m[(i, c)];
                }
            }
            out
        };
        Dataset::new(
            take(&self.outcomes),
            self.outcome_names.clone(),
            rows.iter().map(|&i| self.treatment[i]).collect(),
            take(&self.confounders),
            self.confounder_names.clone(),
            take(&self.heterogeneity),
            self.heterogeneity_names.clone(),
            rows.iter().map(|&i| self.cluster_ids[i].clone()).collect(),
            rows.iter().map(|&i| self.obs_ids[i]).collect(),
        )
    }

    /// Replace the heterogeneity design (e.g. after feature expansion and
    /// screening). The new matrix must carry the constant first.
    pub fn with_heterogeneity(&self, z: Array2<f64>, names: Vec<String>) -> Result<Dataset> {
        Dataset::new(
            self.outcomes.clone(),
            self.outcome_names.clone(),
            self.treatment.clone(),
            self.confounders.clone(),
            self.confounder_names.clone(),
            z,
            names,
            self.cluster_ids.clone(),
            self.obs_ids.clone(),
        )
    }
}

fn dense_cluster_codes(ids: &[String]) -> (Vec<usize>, usize) {
    let mut map: HashMap<&str, usize> = HashMap::new();
    let mut codes = Vec::with_capacity(ids.len());
    for id in ids {
        let next = map.len();
        let code = *map.entry(id.as_str()).or_insert(next);
        codes.push(code);
    }
    (codes, map.len())
}

/// Load a comma-separated file (header row, UTF-8, '.' decimal) under the
/// given schema. The constant column is prepended to the heterogeneity
/// block; row order is preserved.
pub fn load_dataset(path: impl AsRef<Path>, schema: &DataSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(path.display().to_string(), e))?,
        None => return Err(Error::Schema("empty file: no header row".into())),
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut col_index: HashMap<&str, usize> = HashMap::new();
    for (i, c) in columns.iter().enumerate() {
        if col_index.insert(c, i).is_some() {
            return Err(Error::Schema(format!("duplicate column '{c}' in header")));
        }
    }
    let find = |name: &str| -> Result<usize> {
        col_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };

    let treat_col = find(&schema.treatment)?;
    let outcome_cols: Vec<usize> = schema.outcomes.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let conf_cols: Vec<usize> = schema.confounders.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let het_cols: Vec<usize> = schema.heterogeneity.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let cluster_col = find(&schema.cluster)?;
    let id_col = schema.id.as_deref().map(find).transpose()?;
    if outcome_cols.is_empty() {
        return Err(Error::Schema("schema must name at least one outcome column".into()));
    }
    if conf_cols.is_empty() {
        return Err(Error::Schema("schema must name at least one confounder column".into()));
    }

    let mut treatment = Vec::new();
    let mut outcomes_flat = Vec::new();
    let mut conf_flat = Vec::new();
    let mut het_flat = Vec::new();
    let mut cluster_ids = Vec::new();
    let mut obs_ids = Vec::new();

    let parse_cell = |field: &str, row: usize, name: &str| -> Result<f64> {
        let v: f64 = field.trim().parse().map_err(|_| {
            Error::Validation(format!("row {row}, column '{name}': cannot parse '{field}' as a number"))
        })?;
        if !v.is_finite() {
            return Err(Error::Validation(format!(
                "row {row}, column '{name}': non-finite value '{field}'"
            )));
        }
        Ok(v)
    };

    for (row_idx, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::Validation(format!(
                "row {row_idx}: expected {} fields, found {}",
                columns.len(),
                fields.len()
            )));
        }
        let d = parse_cell(fields[treat_col], row_idx, &schema.treatment)?;
        if d != 0.0 && d != 1.0 {
            return Err(Error::Validation(format!(
                "row {row_idx}: treatment column '{}' must be 0 or 1, found {d}",
                schema.treatment
            )));
        }
        treatment.push(d == 1.0);
        for (&c, name) in outcome_cols.iter().zip(&schema.outcomes) {
            outcomes_flat.push(parse_cell(fields[c], row_idx, name)?);
        }
        for (&c, name) in conf_cols.iter().zip(&schema.confounders) {
            conf_flat.push(parse_cell(fields[c], row_idx, name)?);
        }
        for (&c, name) in het_cols.iter().zip(&schema.heterogeneity) {
            het_flat.push(parse_cell(fields[c], row_idx, name)?);
        }
        cluster_ids.push(fields[cluster_col].trim().to_string());
        let id = match id_col {
            Some(c) => fields[c].trim().parse::<u64>().map_err(|_| {
                Error::Validation(format!(
                    "row {row_idx}: id column must hold unsigned integers, found '{}'",
                    fields[c]
                ))
            })?,
            None => row_idx as u64,
        };
        obs_ids.push(id);
    }

    let n = treatment.len();
    let outcomes = Array2::from_shape_vec((n, outcome_cols.len()), outcomes_flat)
        .expect("outcome shape");
    let confounders =
        Array2::from_shape_vec((n, conf_cols.len()), conf_flat).expect("confounder shape");
    let het_raw = Array2::from_shape_vec((n, het_cols.len()), het_flat).expect("heterogeneity shape");
    let (heterogeneity, het_names) =
        Dataset::with_constant_prepended(het_raw, schema.heterogeneity.clone());

    Dataset::new(
        outcomes,
        schema.outcomes.clone(),
        treatment,
        confounders,
        schema.confounders.clone(),
        heterogeneity,
        het_names,
        cluster_ids,
        obs_ids,
    )
}

/// Write a dataset in the [`load_dataset`] format. Floats are printed with
/// the shortest representation that round-trips, so a write/load cycle
/// reproduces every value bit-exactly. The constant heterogeneity column is
/// not written.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<DataSchema> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    );
    let schema = DataSchema {
        treatment: "treatment".into(),
        outcomes: dataset.outcome_names.clone(),
        confounders: dataset.confounder_names.clone(),
        heterogeneity: dataset.heterogeneity_names[1..].to_vec(),
        cluster: "cluster".into(),
        id: Some("id".into()),
    };
    let mut header: Vec<String> = vec!["id".into(), "cluster".into(), "treatment".into()];
    header.extend(schema.outcomes.iter().cloned());
    header.extend(schema.confounders.iter().cloned());
    header.extend(schema.heterogeneity.iter().cloned());
    let write_err = |e| Error::io(path.display().to_string(), e);
    writeln!(out, "{}", header.join(",")).map_err(write_err)?;
    for i in 0..dataset.n() {
        let mut fields: Vec<String> = vec![
            dataset.obs_ids[i].to_string(),
            dataset.cluster_ids[i].clone(),
            if dataset.treatment[i] { "1".into() } else { "0".into() },
        ];
        for c in 0..dataset.outcomes.ncols() {
            fields.push(format!("{}", dataset.outcomes[(i, c)]));
        }
        for c in 0..dataset.confounders.ncols() {
            fields.push(format!("{}", dataset.confounders[(i, c)]));
        }
        for c in 1..dataset.heterogeneity.ncols() {
            fields.push(format!("{}", dataset.heterogeneity[(i, c)]));
        }
        writeln!(out, "{}", fields.join(",")).map_err(write_err)?;
    }
    out.flush().map_err(write_err)?;
    Ok(schema)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_file(contents: &str) -> tempfile::NamedTempFile {
        use std::io::Write as _;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn tiny_schema() -> DataSchema {
        DataSchema {
            treatment: "d".into(),
            outcomes: vec!["y".into()],
            confounders: vec!["x".into()],
            heterogeneity: vec![],
            cluster: "cw".into(),
            id: None,
        }
    }

    #[test]
    fn minimal_four_row_file_loads() {
        let f = tiny_file("d,y,x,cw\n0,1.5,0.2,a\n1,2.5,0.3,a\n0,0.5,-1,b\n1,3.5,2,b\n");
        let ds = load_dataset(f.path(), &tiny_schema()).unwrap();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.heterogeneity().ncols(), 1); // constant only
        assert_eq!(ds.n_clusters(), 2);
        assert_eq!(ds.obs_ids(), &[0, 1, 2, 3]);
    }

    #[test]
    fn non_binary_treatment_is_rejected() {
        let f = tiny_file("d,y,x,cw\n0,1.5,0.2,a\n2,2.5,0.3,a\n");
        let err = load_dataset(f.path(), &tiny_schema()).unwrap_err();
        assert!(err.to_string().contains("must be 0 or 1"));
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let f = tiny_file("d,y,cw\n0,1.5,a\n1,2.5,a\n");
        let err = load_dataset(f.path(), &tiny_schema()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(err.to_string().contains("'x'"));
    }

    #[test]
    fn non_finite_cell_names_row_and_column() {
        let f = tiny_file("d,y,x,cw\n0,1.5,0.2,a\n1,inf,0.3,a\n");
        let err = load_dataset(f.path(), &tiny_schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("'y'"), "{msg}");
    }

    #[test]
    fn constant_heterogeneity_column_enforced() {
        let res = Dataset::new(
            array![[1.0], [2.0]],
            vec!["y".into()],
            vec![true, false],
            array![[0.0], [1.0]],
            vec!["x".into()],
            array![[1.0], [0.9]],
            vec![CONSTANT_NAME.into()],
            vec!["a".into(), "a".into()],
            vec![0, 1],
        );
        assert!(res.is_err());
    }

    #[test]
    fn duplicate_obs_ids_rejected() {
        let res = Dataset::new(
            array![[1.0], [2.0]],
            vec!["y".into()],
            vec![true, false],
            array![[0.0], [1.0]],
            vec!["x".into()],
            array![[1.0], [1.0]],
            vec![CONSTANT_NAME.into()],
            vec!["a".into(), "a".into()],
            vec![7, 7],
        );
        assert!(res.is_err());
    }

    #[test]
    fn subset_preserves_order_and_recodes_clusters() {
        let f = tiny_file("d,y,x,cw\n0,1,0.2,a\n1,2,0.3,b\n0,3,-1,c\n1,4,2,c\n");
        let ds = load_dataset(f.path(), &tiny_schema()).unwrap();
        let sub = ds.subset(&[3, 0]).unwrap();
        assert_eq!(sub.obs_ids(), &[3, 0]);
        assert_eq!(sub.cluster_index(), &[0, 1]);
        assert_eq!(sub.outcome(0).to_vec(), vec![4.0, 1.0]);
    }
}
