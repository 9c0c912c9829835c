//! `hetfx policy`: quota-constrained assignment rules evaluated on the
//! bagged CATEs.

use anyhow::{bail, Result};
use hetfx::policy::{evaluate_rule, select_participants, PolicyRule, RuleKind};
use hetfx::rng::derive_seed;
use serde::Serialize;
use std::path::Path;

use crate::commands::{column_by_name, load_pipeline_state};
use crate::config::RunConfig;
use crate::manifest::{self, Manifest};
use crate::output::{fmt_f64, write_json, CsvWriter};

#[derive(Serialize)]
struct PolicyReport {
    quota: usize,
    rules: Vec<RuleRow>,
}

#[derive(Serialize)]
struct RuleRow {
    rule: String,
    mean_cate: f64,
    selected: usize,
}

pub fn run(config: &RunConfig, raw_config: &str, out_dir: &Path, seed: u64) -> Result<()> {
    manifest::ensure_fresh(out_dir, "policy")?;
    let hash = manifest::config_hash(raw_config);
    manifest::require_upstream(out_dir, "fit", &hash, seed)?;

    let state = load_pipeline_state(config, out_dir)?;
    let analysis = &state.prepared.dataset;
    let gamma = &state.ensemble.bagged;
    let treated_count = analysis.treatment().iter().filter(|&&t| t).count();
    let quota = if config.policy.quota > 0 {
        config.policy.quota
    } else {
        treated_count
    };

    let mut rules: Vec<PolicyRule> = Vec::new();
    for (idx, name) in config.policy.rules.iter().enumerate() {
        let kind = match name.as_str() {
            "observed" => RuleKind::Observed,
            "random" => RuleKind::Random,
            "best-case" => RuleKind::BestCase,
            "worst-case" => RuleKind::WorstCase,
            other => bail!("unknown policy rule '{other}'"),
        };
        rules.push(PolicyRule {
            label: name.clone(),
            kind,
            quota,
            seed: derive_seed(seed, "policy-rule", idx as u64),
        });
    }
    if let Some(pred) = &config.policy.predicate {
        let to_flags = |name: &str| -> Result<Vec<bool>> {
            let col = column_by_name(analysis, name)?;
            if col.iter().any(|&v| v != 0.0 && v != 1.0) {
                bail!("predicate column '{name}' must be binary");
            }
            Ok(col.iter().map(|&v| v == 1.0).collect())
        };
        rules.push(PolicyRule {
            label: format!("predicate:{}+{}", pred.primary, pred.fill),
            kind: RuleKind::PredicateWithFill {
                primary: to_flags(&pred.primary)?,
                fill: to_flags(&pred.fill)?,
            },
            quota,
            seed: derive_seed(seed, "policy-rule", rules.len() as u64),
        });
    }

    let mut rows = Vec::new();
    for rule in &rules {
        let selection = select_participants(rule, gamma, analysis.treatment(), analysis.obs_ids())?;
        rows.push(RuleRow {
            rule: rule.label.clone(),
            mean_cate: evaluate_rule(&selection, gamma)?,
            selected: selection.len(),
        });
    }

    let report = PolicyReport { quota, rules: rows };
    write_json(&out_dir.join("policy.json"), &report)?;
    let mut csv = CsvWriter::create(
        &out_dir.join("policy.csv"),
        &["rule", "mean_cate", "selected"],
    )?;
    for row in &report.rules {
        csv.row(&[row.rule.clone(), fmt_f64(row.mean_cate), row.selected.to_string()])?;
    }
    csv.finish()?;

    manifest::write(
        out_dir,
        &Manifest {
            command: "policy".into(),
            config_hash: hash,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            artifacts: vec!["policy.json".into(), "policy.csv".into()],
        },
    )
}
