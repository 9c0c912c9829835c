//! `hetfx report`: CATE distribution curve, propensity–CATE kernel
//! regression, median-split heterogeneity tables, the sign profile, and the
//! cross-method correlation table.

use anyhow::{Context, Result};
use hetfx::inference::{significance_stars, BootstrapConfig};
use hetfx::pipeline::run_pipeline;
use hetfx::policy::{sign_group_profile, CateBootstrapContext};
use hetfx::reporting::{
    binary_split_table, correlate_methods, kernel_density, kernel_regression,
    silverman_bandwidth,
};
use hetfx::rng::derive_seed;
use ndarray::Array2;
use serde::Serialize;
use std::path::Path;

use crate::commands::{column_by_name, load_pipeline_state};
use crate::config::{parse_variant, RunConfig};
use crate::manifest::{self, Manifest};
use crate::output::{fmt_f64, fmt_opt, write_json, CsvWriter};

#[derive(Serialize)]
struct ReportMeta {
    kde_bandwidth: f64,
    kreg_bandwidth: f64,
    histogram_bins: usize,
    replications: usize,
    characteristics: Vec<String>,
    variants: Vec<String>,
    kreg_gap_points: usize,
}

pub fn run(config: &RunConfig, raw_config: &str, out_dir: &Path, seed: u64) -> Result<()> {
    manifest::ensure_fresh(out_dir, "report")?;
    let hash = manifest::config_hash(raw_config);
    manifest::require_upstream(out_dir, "fit", &hash, seed)?;
    let mut artifacts: Vec<String> = Vec::new();

    let state = load_pipeline_state(config, out_dir)?;
    let analysis = &state.prepared.dataset;
    let gamma = &state.ensemble.bagged;

    // CATE distribution.
    let kde_bw = if config.report.kde_bandwidth > 0.0 {
        Some(config.report.kde_bandwidth)
    } else {
        None
    };
    let kde = kernel_density(gamma, kde_bw)?;
    let mut density_csv = CsvWriter::create(&out_dir.join("density.csv"), &["grid", "density"])?;
    for (g, d) in kde.grid.iter().zip(&kde.density) {
        density_csv.row(&[fmt_f64(*g), fmt_f64(*d)])?;
    }
    density_csv.finish()?;
    artifacts.push("density.csv".into());

    // CATEs against the participation probability.
    let kreg_bw = if config.report.kreg_bandwidth > 0.0 {
        config.report.kreg_bandwidth
    } else {
        silverman_bandwidth(&state.prepared.phat)?
    };
    let kreg = kernel_regression(
        &state.prepared.phat,
        gamma,
        kreg_bw,
        config.report.histogram_bins,
    )?;
    let mut kreg_csv =
        CsvWriter::create(&out_dir.join("regression.csv"), &["grid", "estimate"])?;
    for (g, e) in kreg.grid.iter().zip(&kreg.estimate) {
        kreg_csv.row(&[fmt_f64(*g), fmt_opt(*e)])?;
    }
    kreg_csv.finish()?;
    artifacts.push("regression.csv".into());
    let mut hist_csv = CsvWriter::create(
        &out_dir.join("regression_histogram.csv"),
        &["lo", "hi", "count"],
    )?;
    for bin in &kreg.histogram {
        hist_csv.row(&[fmt_f64(bin.lo), fmt_f64(bin.hi), bin.count.to_string()])?;
    }
    hist_csv.finish()?;
    artifacts.push("regression_histogram.csv".into());

    // Characteristics: configured names or every confounder.
    let char_names: Vec<String> = if config.report.characteristics.is_empty() {
        analysis.confounder_names().to_vec()
    } else {
        config.report.characteristics.clone()
    };
    let mut char_matrix = Array2::<f64>::zeros((analysis.n(), char_names.len()));
    for (c, name) in char_names.iter().enumerate() {
        let col = column_by_name(analysis, name)?;
        for (i, v) in col.into_iter().enumerate() {
            char_matrix[(i, c)] = v;
        }
    }

    let ctx = CateBootstrapContext {
        dataset: analysis,
        weights: &state.prepared.weights,
        splits: &state.splits,
        outcome_col: state.outcome_col,
        config: BootstrapConfig::new(
            config.report.replications,
            derive_seed(seed, "report-bootstrap-root", 0),
        )?,
    };

    // Median-split heterogeneity table.
    let table = binary_split_table(gamma, &char_matrix, &char_names, Some(&ctx))?;
    write_json(&out_dir.join("splits_table.json"), &table)?;
    let mut split_csv = CsvWriter::create(
        &out_dir.join("splits_table.csv"),
        &[
            "characteristic",
            "share_low",
            "mean_low",
            "share_high",
            "mean_high",
            "difference",
            "se",
            "stars",
        ],
    )?;
    for row in &table.rows {
        let se = row.se.unwrap_or(f64::NAN);
        split_csv.row(&[
            row.name.clone(),
            fmt_f64(row.share_low),
            fmt_f64(row.mean_low),
            fmt_f64(row.share_high),
            fmt_f64(row.mean_high),
            fmt_f64(row.difference),
            fmt_f64(se),
            significance_stars(row.difference, se).to_string(),
        ])?;
    }
    split_csv.finish()?;
    artifacts.push("splits_table.json".into());
    artifacts.push("splits_table.csv".into());

    // Characteristics by the sign of the CATE.
    let profile = sign_group_profile(gamma, &char_matrix, &char_names, Some(&ctx))?;
    write_json(&out_dir.join("sign_profile.json"), &profile)?;
    artifacts.push("sign_profile.json".into());

    // Cross-method correlation over re-run pipeline variants.
    if !config.report.variants.is_empty() {
        let base_selector = config.selector_options()?;
        let n_splits = if config.report.variant_splits > 0 {
            config.report.variant_splits
        } else {
            config.fit.splits
        };
        let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
        for tag in &config.report.variants {
            let (method, selector) = parse_variant(tag, &base_selector)?;
            let opts = hetfx::pipeline::PipelineOptions {
                n_splits,
                method,
                selector,
                renormalize_half_weights: config.fit.renormalize_half_weights,
                reestimate_weights_per_split: false,
                outcome_col: state.outcome_col,
                master_seed: derive_seed(seed, "variant", entries.len() as u64),
            };
            let (_, ens) = run_pipeline(analysis, &state.prepared.phat, &state.prepared.weights, &opts)
                .with_context(|| format!("variant '{tag}'"))?;
            entries.push((tag.clone(), ens.bagged));
        }
        let corr = correlate_methods(&entries)?;
        write_json(&out_dir.join("correlations.json"), &corr)?;
        let mut corr_csv = {
            let mut header: Vec<String> = vec!["method".into()];
            header.extend(corr.labels.iter().cloned());
            let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            CsvWriter::create(&out_dir.join("correlations.csv"), &refs)?
        };
        for (a, label) in corr.labels.iter().enumerate() {
            let mut row = vec![label.clone()];
            row.extend(corr.values[a].iter().map(|v| fmt_opt(*v)));
            corr_csv.row(&row)?;
        }
        corr_csv.finish()?;
        artifacts.push("correlations.json".into());
        artifacts.push("correlations.csv".into());
    }

    write_json(
        &out_dir.join("report.json"),
        &ReportMeta {
            kde_bandwidth: kde.bandwidth,
            kreg_bandwidth: kreg_bw,
            histogram_bins: config.report.histogram_bins,
            replications: config.report.replications,
            characteristics: char_names,
            variants: config.report.variants.clone(),
            kreg_gap_points: kreg.estimate.iter().filter(|e| e.is_none()).count(),
        },
    )?;
    artifacts.push("report.json".into());

    manifest::write(
        out_dir,
        &Manifest {
            command: "report".into(),
            config_hash: hash,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            artifacts,
        },
    )
}
