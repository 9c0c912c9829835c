//! `hetfx fit`: propensity, trimming, weights, and the honest-split
//! ensemble. Persists everything the inference, report, and policy steps
//! consume.

use anyhow::Result;
use hetfx::data::balance_report;
use hetfx::pipeline::run_pipeline;
use hetfx::propensity::{average_marginal_effects, LogitOptions};
use serde::Serialize;
use std::path::Path;

use crate::commands::load_dataset_with_features;
use crate::config::RunConfig;
use crate::manifest::{self, Manifest};
use crate::output::{fmt_f64, write_json, CsvWriter};

#[derive(Serialize)]
struct PropensityReport {
    intercept: f64,
    coefficients: Vec<NamedValue>,
    dropped_collinear: Vec<String>,
    average_marginal_effects: Vec<NamedValue>,
    iterations: usize,
    final_gradient_norm: f64,
}

#[derive(Serialize)]
struct NamedValue {
    name: String,
    value: f64,
}

#[derive(Serialize)]
struct SplitCoefficients {
    split_index: usize,
    method: String,
    lambda: Option<f64>,
    selected: Vec<NamedValue>,
    constant: f64,
}

#[derive(Serialize)]
struct EnsembleManifest {
    method: String,
    n_splits: usize,
    master_seed: u64,
    outcome: String,
    selected_sets: Vec<Vec<String>>,
    split_seeds: Vec<u64>,
}

pub fn run(config: &RunConfig, raw_config: &str, out_dir: &Path, seed: u64) -> Result<()> {
    manifest::ensure_fresh(out_dir, "fit")?;
    let mut artifacts: Vec<String> = Vec::new();

    let (dataset, audit) = load_dataset_with_features(config)?;
    if let Some(audit) = &audit {
        write_json(&out_dir.join("screened_features.json"), audit)?;
        artifacts.push("screened_features.json".into());
    }

    // Pre-trimming balance diagnostics on the confounders.
    let balance = balance_report(
        dataset.confounders(),
        dataset.confounder_names(),
        dataset.treatment(),
    )?;
    write_json(&out_dir.join("balance.json"), &balance)?;
    artifacts.push("balance.json".into());

    let outcome_col = config.outcome_col(dataset.outcome_names())?;
    let prepared = hetfx::pipeline::prepare(
        &dataset,
        config.fit.propensity_includes_heterogeneity,
        config.fit.trim,
        &LogitOptions::default(),
    )?;

    // Propensity model report with average marginal effects.
    let x_names: Vec<String> = if config.fit.propensity_includes_heterogeneity {
        let mut names = dataset.confounder_names().to_vec();
        names.extend(dataset.heterogeneity_names()[1..].iter().cloned());
        names
    } else {
        dataset.confounder_names().to_vec()
    };
    let ames = {
        let x = if config.fit.propensity_includes_heterogeneity {
            ndarray::concatenate(
                ndarray::Axis(1),
                &[
                    dataset.confounders().view(),
                    dataset.heterogeneity().slice(ndarray::s![.., 1..]),
                ],
            )
            .expect("rows agree")
        } else {
            dataset.confounders().clone()
        };
        average_marginal_effects(&prepared.model, &x.view())
    };
    let propensity = PropensityReport {
        intercept: prepared.model.coefficients[0],
        coefficients: prepared
            .model
            .kept
            .iter()
            .enumerate()
            .map(|(slot, &j)| NamedValue {
                name: x_names[j].clone(),
                value: prepared.model.coefficients[slot + 1],
            })
            .collect(),
        dropped_collinear: prepared.model.dropped.iter().map(|&j| x_names[j].clone()).collect(),
        average_marginal_effects: prepared
            .model
            .kept
            .iter()
            .zip(&ames)
            .map(|(&j, &v)| NamedValue {
                name: x_names[j].clone(),
                value: v,
            })
            .collect(),
        iterations: prepared.model.iterations,
        final_gradient_norm: prepared.model.final_gradient_norm,
    };
    write_json(&out_dir.join("propensity.json"), &propensity)?;
    artifacts.push("propensity.json".into());

    write_json(&out_dir.join("trim.json"), &prepared.trim)?;
    artifacts.push("trim.json".into());

    // Weights table for the analysis sample.
    let analysis = &prepared.dataset;
    let mut weights_csv = CsvWriter::create(
        &out_dir.join("weights.csv"),
        &["obs_id", "cluster", "treatment", "phat", "weight"],
    )?;
    for i in 0..analysis.n() {
        weights_csv.row(&[
            analysis.obs_ids()[i].to_string(),
            analysis.cluster_ids()[i].clone(),
            (analysis.treatment()[i] as u8).to_string(),
            fmt_f64(prepared.phat[i]),
            fmt_f64(prepared.weights.as_slice()[i]),
        ])?;
    }
    weights_csv.finish()?;
    artifacts.push("weights.csv".into());

    // The honest-split ensemble.
    let opts = config.pipeline_options(outcome_col, seed)?;
    let (splits, ensemble) = run_pipeline(analysis, &prepared.phat, &prepared.weights, &opts)?;

    write_json(&out_dir.join("splits.json"), &splits)?;
    artifacts.push("splits.json".into());

    let mut pred_csv = {
        let mut header: Vec<String> = vec!["obs_id".into()];
        header.extend((0..splits.len()).map(|s| format!("split_{s}")));
        let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        CsvWriter::create(&out_dir.join("predictions.csv"), &header_refs)?
    };
    for i in 0..analysis.n() {
        let mut row = vec![analysis.obs_ids()[i].to_string()];
        row.extend((0..splits.len()).map(|s| fmt_f64(ensemble.predictions[(s, i)])));
        pred_csv.row(&row)?;
    }
    pred_csv.finish()?;
    artifacts.push("predictions.csv".into());

    let mut bagged_csv = CsvWriter::create(&out_dir.join("bagged.csv"), &["obs_id", "gamma_bar"])?;
    for i in 0..analysis.n() {
        bagged_csv.row(&[
            analysis.obs_ids()[i].to_string(),
            fmt_f64(ensemble.bagged[i]),
        ])?;
    }
    bagged_csv.finish()?;
    artifacts.push("bagged.csv".into());

    let het_names = analysis.heterogeneity_names();
    let ensemble_manifest = EnsembleManifest {
        method: format!("mcm-{}", toml_ea(config)),
        n_splits: splits.len(),
        master_seed: seed,
        outcome: analysis.outcome_names()[outcome_col].clone(),
        selected_sets: ensemble
            .selected_sets
            .iter()
            .map(|set| set.iter().map(|&j| het_names[j].clone()).collect())
            .collect(),
        split_seeds: (0..splits.len())
            .map(|s| hetfx::rng::derive_seed(seed, "split", s as u64))
            .collect(),
    };
    write_json(&out_dir.join("ensemble.json"), &ensemble_manifest)?;
    artifacts.push("ensemble.json".into());

    let coefficients: Vec<SplitCoefficients> = splits
        .iter()
        .map(|s| SplitCoefficients {
            split_index: s.split_index,
            method: format!("mcm-{}", toml_ea(config)),
            lambda: s.lambda,
            selected: s
                .selected_heterogeneity
                .iter()
                .map(|&j| NamedValue {
                    name: het_names[j].clone(),
                    value: s.delta[j],
                })
                .collect(),
            constant: s.delta[0],
        })
        .collect();
    write_json(&out_dir.join("coefficients.json"), &coefficients)?;
    artifacts.push("coefficients.json".into());

    // Penalty-selection table of the first split, exported as delimited
    // text: penalty, mean held-out error, per-fold errors, selected size.
    if let Some(cv_table) = splits.first().and_then(|s| s.cv_table.as_ref()) {
        let n_folds = cv_table.first().map(|r| r.fold_mses.len()).unwrap_or(0);
        let mut header: Vec<String> = vec!["lambda".into(), "mean_mse".into()];
        header.extend((0..n_folds).map(|f| format!("fold_{f}_mse")));
        header.push("n_selected".into());
        let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let mut cv_csv = CsvWriter::create(&out_dir.join("cv_table.csv"), &refs)?;
        for row in cv_table {
            let mut fields = vec![fmt_f64(row.lambda), fmt_f64(row.mean_mse)];
            fields.extend(row.fold_mses.iter().map(|&m| fmt_f64(m)));
            fields.push(row.n_selected.to_string());
            cv_csv.row(&fields)?;
        }
        cv_csv.finish()?;
        artifacts.push("cv_table.csv".into());
    }

    manifest::write(
        out_dir,
        &Manifest {
            command: "fit".into(),
            config_hash: manifest::config_hash(raw_config),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            artifacts,
        },
    )
}

fn toml_ea(config: &RunConfig) -> &'static str {
    match config.fit.ea {
        hetfx::effects::EaMode::None => "none",
        hetfx::effects::EaMode::OneStep => "one-step",
        hetfx::effects::EaMode::TwoStep => "two-step",
    }
}
