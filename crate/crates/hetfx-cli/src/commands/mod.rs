pub mod fit;
pub mod infer;
pub mod policy;
pub mod report;
pub mod simulate;

use anyhow::{bail, Context, Result};
use hetfx::data::{self, Dataset, DroppedColumn};
use hetfx::pipeline::{bag_cates, prepare, CateEnsemble, PreparedSample, SplitResult};
use hetfx::propensity::LogitOptions;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::config::RunConfig;

/// Audit record of feature expansion and screening.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureAudit {
    pub expanded: Vec<String>,
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedColumn>,
    pub warnings: Vec<String>,
}

/// Load the dataset named by the config and apply feature expansion and
/// screening when a [features] section is present.
pub fn load_dataset_with_features(config: &RunConfig) -> Result<(Dataset, Option<FeatureAudit>)> {
    let section = config.data_section()?;
    let dataset = data::load_dataset(&section.path, &section.schema)
        .with_context(|| format!("loading {}", section.path.display()))?;
    let raw_names: Vec<String> = dataset.heterogeneity_names()[1..].to_vec();
    let Some(spec) = config.feature_spec(&raw_names)? else {
        return Ok((dataset, None));
    };
    let raw = dataset
        .heterogeneity()
        .slice(ndarray::s![.., 1..])
        .to_owned();
    let expanded = data::expand_features(&raw, &spec)?;
    let screened = data::screen_features(
        &expanded.matrix,
        &expanded.names,
        &spec,
        dataset.treatment(),
    )?;
    let audit = FeatureAudit {
        expanded: expanded.names.clone(),
        kept: screened.names.clone(),
        dropped: screened.dropped.clone(),
        warnings: expanded.warnings.clone(),
    };
    let dataset = dataset.with_heterogeneity(screened.matrix, screened.names)?;
    Ok((dataset, Some(audit)))
}

/// Everything downstream commands need: the prepared (trimmed, weighted)
/// sample, the persisted splits, and the bagged ensemble.
pub struct PipelineState {
    pub prepared: PreparedSample,
    pub splits: Vec<SplitResult>,
    pub ensemble: CateEnsemble,
    pub outcome_col: usize,
}

/// Rebuild the prepared sample deterministically from the config and load
/// the persisted splits from the fit step.
pub fn load_pipeline_state(config: &RunConfig, out_dir: &Path) -> Result<PipelineState> {
    let (dataset, _) = load_dataset_with_features(config)?;
    let outcome_col = config.outcome_col(dataset.outcome_names())?;
    let prepared = prepare(
        &dataset,
        config.fit.propensity_includes_heterogeneity,
        config.fit.trim,
        &LogitOptions::default(),
    )?;
    let splits_path = out_dir.join("splits.json");
    let raw = std::fs::read_to_string(&splits_path)
        .with_context(|| format!("missing {}; run `hetfx fit` first", splits_path.display()))?;
    let splits: Vec<SplitResult> = serde_json::from_str(&raw)
        .with_context(|| format!("cannot parse {}", splits_path.display()))?;
    if splits.iter().any(|s| s.predictions.len() != prepared.dataset.n()) {
        bail!("splits.json does not match the prepared sample; rerun `hetfx fit`");
    }
    let ensemble = bag_cates(&splits)?;
    Ok(PipelineState {
        prepared,
        splits,
        ensemble,
        outcome_col,
    })
}

/// Resolve a named column among confounders first, then non-constant
/// heterogeneity columns; returns its values.
pub fn column_by_name(dataset: &Dataset, name: &str) -> Result<Vec<f64>> {
    if let Some(j) = dataset.confounder_names().iter().position(|n| n == name) {
        return Ok(dataset.confounders().column(j).to_vec());
    }
    if let Some(j) = dataset
        .heterogeneity_names()
        .iter()
        .position(|n| n == name)
    {
        return Ok(dataset.heterogeneity().column(j).to_vec());
    }
    bail!("column '{name}' is neither a confounder nor a heterogeneity column")
}
