//! The declarative run configuration: one TOML document drives every
//! subcommand. Defaults follow the estimation procedure's reference values
//! (30 splits, 10 folds, 1000 CATE replications, 4999 average-effect
//! replications, trimming at the 0.5/99.5 percentiles, share_min 1%,
//! corr_max 0.99, polynomial order 4).

use anyhow::{bail, Context, Result};
use hetfx::data::{DataSchema, FeatureSpec, VariableKind};
use hetfx::effects::{EaMode, Selector, SelectorOptions};
use hetfx::pipeline::{PipelineMethod, PipelineOptions};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; mandatory (no wall-clock seeding).
    pub seed: Option<u64>,
    pub data: Option<DataSection>,
    pub simulate: Option<SimulateSection>,
    pub features: Option<FeatureSection>,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub infer: InferSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub policy: PolicySection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    pub schema: DataSchema,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Named generator configuration ("rct-linear", "obs-sparse", "null").
    pub name: Option<String>,
    /// Full inline generator configuration; overrides `name`.
    pub dgp: Option<hetfx::synth::DgpConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSection {
    /// Heterogeneity columns that are binary; the rest count as continuous.
    #[serde(default)]
    pub binary: Vec<String>,
    #[serde(default = "default_interaction_order")]
    pub interaction_order: u32,
    #[serde(default = "default_polynomial_order")]
    pub polynomial_order: u32,
    #[serde(default = "default_true")]
    pub log_transform: bool,
    #[serde(default = "default_share_min")]
    pub share_min: f64,
    #[serde(default = "default_corr_max")]
    pub corr_max: f64,
}

fn default_interaction_order() -> u32 {
    2
}
fn default_polynomial_order() -> u32 {
    4
}
fn default_true() -> bool {
    true
}
fn default_share_min() -> f64 {
    0.01
}
fn default_corr_max() -> f64 {
    0.99
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "default_splits")]
    pub splits: usize,
    /// One-step efficiency augmentation is the reference choice.
    #[serde(default = "default_ea")]
    pub ea: EaMode,
    #[serde(default = "default_selector")]
    pub selector: String,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_adaptive_gamma")]
    pub adaptive_gamma: f64,
    #[serde(default = "default_adaptive_floor")]
    pub adaptive_floor: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_n_lambda")]
    pub n_lambda: usize,
    #[serde(default = "default_lambda_min_ratio")]
    pub lambda_min_ratio: f64,
    #[serde(default = "default_true")]
    pub trim: bool,
    #[serde(default)]
    pub propensity_includes_heterogeneity: bool,
    #[serde(default = "default_true")]
    pub renormalize_half_weights: bool,
    #[serde(default)]
    pub reestimate_weights_per_split: bool,
    /// Outcome column driving the CATE fit; first outcome when empty.
    #[serde(default)]
    pub outcome: Option<String>,
}

fn default_splits() -> usize {
    30
}
fn default_ea() -> EaMode {
    EaMode::OneStep
}
fn default_selector() -> String {
    "cv-lasso".into()
}
fn default_adaptive_gamma() -> f64 {
    1.0
}
fn default_adaptive_floor() -> f64 {
    1e-6
}
fn default_folds() -> usize {
    10
}
fn default_n_lambda() -> usize {
    100
}
fn default_lambda_min_ratio() -> f64 {
    1e-4
}

impl Default for FitSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferSection {
    #[serde(default = "default_cate_replications")]
    pub cate_replications: usize,
    #[serde(default = "default_average_replications")]
    pub average_replications: usize,
    #[serde(default = "default_true")]
    pub reestimate_propensity: bool,
}

fn default_cate_replications() -> usize {
    1000
}
fn default_average_replications() -> usize {
    4999
}

impl Default for InferSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    /// Characteristics for split tables and the sign profile; all
    /// confounders when empty.
    #[serde(default)]
    pub characteristics: Vec<String>,
    /// Method variants for the cross-method correlation table, e.g.
    /// "mcm-one-step", "mom", "mcm-none-adaptive".
    #[serde(default)]
    pub variants: Vec<String>,
    /// Honest splits per variant; the fit split count when zero.
    #[serde(default)]
    pub variant_splits: usize,
    /// Zero means Silverman's rule.
    #[serde(default)]
    pub kde_bandwidth: f64,
    /// Zero means Silverman's rule on the propensity scores.
    #[serde(default)]
    pub kreg_bandwidth: f64,
    #[serde(default = "default_histogram_bins")]
    pub histogram_bins: usize,
    /// Replications for report-table standard errors.
    #[serde(default = "default_report_replications")]
    pub replications: usize,
}

fn default_histogram_bins() -> usize {
    50
}
fn default_report_replications() -> usize {
    1000
}

impl Default for ReportSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    /// Participant quota; zero means the realized treated count on the
    /// analysis sample.
    #[serde(default)]
    pub quota: usize,
    #[serde(default = "default_rules")]
    pub rules: Vec<String>,
    /// Optional predicate rule: all of `primary`, topped up from `fill`.
    pub predicate: Option<PredicateSection>,
}

fn default_rules() -> Vec<String> {
    vec![
        "observed".into(),
        "random".into(),
        "best-case".into(),
        "worst-case".into(),
    ]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateSection {
    /// Name of a binary column (confounder or heterogeneity) for the
    /// primary group.
    pub primary: String,
    pub fill: String,
}

impl Default for PolicySection {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let config: RunConfig = toml::from_str(&raw)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        Ok((config, raw))
    }

    /// The effective master seed: command-line override, else the config's.
    pub fn effective_seed(&self, cli_seed: Option<u64>) -> Result<u64> {
        cli_seed.or(self.seed).context(
            "a master seed is required: set `seed` in the config or pass --seed",
        )
    }

    pub fn data_section(&self) -> Result<&DataSection> {
        self.data
            .as_ref()
            .context("this command needs a [data] section with path and schema")
    }

    pub fn selector_options(&self) -> Result<SelectorOptions> {
        let selector = match self.fit.selector.as_str() {
            "cv-lasso" => Selector::CvLasso,
            "cv-adaptive-lasso" => Selector::CvAdaptiveLasso {
                gamma: self.fit.adaptive_gamma,
                floor: self.fit.adaptive_floor,
            },
            "fixed" => Selector::FixedLambda {
                lambda: self.fit.lambda,
            },
            other => bail!(
                "unknown selector '{other}' (expected cv-lasso, cv-adaptive-lasso, or fixed)"
            ),
        };
        Ok(SelectorOptions {
            selector,
            folds: self.fit.folds,
            n_lambda: self.fit.n_lambda,
            lambda_min_ratio: self.fit.lambda_min_ratio,
            ..SelectorOptions::default()
        })
    }

    pub fn pipeline_options(&self, outcome_col: usize, seed: u64) -> Result<PipelineOptions> {
        Ok(PipelineOptions {
            n_splits: self.fit.splits,
            method: PipelineMethod::Mcm(self.fit.ea),
            selector: self.selector_options()?,
            renormalize_half_weights: self.fit.renormalize_half_weights,
            reestimate_weights_per_split: self.fit.reestimate_weights_per_split,
            outcome_col,
            master_seed: seed,
        })
    }

    pub fn feature_spec(&self, heterogeneity_names: &[String]) -> Result<Option<FeatureSpec>> {
        let Some(section) = &self.features else {
            return Ok(None);
        };
        for b in &section.binary {
            if !heterogeneity_names.contains(b) {
                bail!("features.binary names unknown heterogeneity column '{b}'");
            }
        }
        let variables = heterogeneity_names
            .iter()
            .map(|n| {
                let kind = if section.binary.contains(n) {
                    VariableKind::Binary
                } else {
                    VariableKind::Continuous
                };
                (n.clone(), kind)
            })
            .collect();
        Ok(Some(FeatureSpec {
            variables,
            interaction_order: section.interaction_order,
            polynomial_order: section.polynomial_order,
            log_transform: section.log_transform,
            share_min: section.share_min,
            corr_max: section.corr_max,
        }))
    }

    /// Resolve the fit outcome column against the dataset's outcome names.
    pub fn outcome_col(&self, outcome_names: &[String]) -> Result<usize> {
        match &self.fit.outcome {
            None => Ok(0),
            Some(name) => outcome_names
                .iter()
                .position(|n| n == name)
                .with_context(|| format!("fit.outcome '{name}' is not an outcome column")),
        }
    }
}

/// Parse a report variant tag into a pipeline method and selector choice.
pub fn parse_variant(tag: &str, base: &SelectorOptions) -> Result<(PipelineMethod, SelectorOptions)> {
    let (method_part, adaptive) = match tag.strip_suffix("-adaptive") {
        Some(stem) => (stem, true),
        None => (tag, false),
    };
    let method = match method_part {
        "mcm-none" => PipelineMethod::Mcm(EaMode::None),
        "mcm-one-step" => PipelineMethod::Mcm(EaMode::OneStep),
        "mcm-two-step" => PipelineMethod::Mcm(EaMode::TwoStep),
        "mom" => PipelineMethod::Mom { normalized: false },
        other => bail!("unknown variant '{other}'"),
    };
    let mut sel = base.clone();
    if adaptive {
        sel.selector = Selector::CvAdaptiveLasso {
            gamma: 1.0,
            floor: 1e-6,
        };
    } else if !matches!(sel.selector, Selector::FixedLambda { .. }) {
        sel.selector = Selector::CvLasso;
    }
    Ok((method, sel))
}
