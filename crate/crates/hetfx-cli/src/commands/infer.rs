//! `hetfx infer`: average-effect table with clustered bootstrap standard
//! errors, per-outcome effect curve, per-observation CATE standard errors,
//! and the CATE summary table.

use anyhow::Result;
use hetfx::inference::{
    bootstrap_averages, bootstrap_cates, monthly_effect_curve, significance_stars,
    BootstrapConfig, EffectEstimate,
};
use hetfx::reporting::cate_summary;
use hetfx::rng::derive_seed;
use serde::Serialize;
use std::path::Path;

use crate::commands::load_pipeline_state;
use crate::config::RunConfig;
use crate::manifest::{self, Manifest};
use crate::output::{fmt_f64, write_json, CsvWriter};

#[derive(Serialize)]
struct EffectRow {
    value: f64,
    se: f64,
    stars: String,
}

#[derive(Serialize)]
struct OutcomeAverages {
    outcome: String,
    ate: EffectRow,
    atet: EffectRow,
    atent: EffectRow,
}

#[derive(Serialize)]
struct AveragesReport {
    replications: usize,
    reestimate_propensity: bool,
    outcomes: Vec<OutcomeAverages>,
}

#[derive(Serialize)]
struct GroupsReport {
    replications_requested: usize,
    replications_used: usize,
    excluded: usize,
    groups: Vec<GroupRow>,
}

#[derive(Serialize)]
struct GroupRow {
    label: String,
    point: f64,
    se: f64,
    stars: String,
}

fn effect_row(e: &EffectEstimate) -> EffectRow {
    let se = e.se.unwrap_or(f64::NAN);
    EffectRow {
        value: e.value,
        se,
        stars: significance_stars(e.value, se).to_string(),
    }
}

pub fn run(config: &RunConfig, raw_config: &str, out_dir: &Path, seed: u64) -> Result<()> {
    manifest::ensure_fresh(out_dir, "infer")?;
    let hash = manifest::config_hash(raw_config);
    manifest::require_upstream(out_dir, "fit", &hash, seed)?;
    let mut artifacts: Vec<String> = Vec::new();

    let state = load_pipeline_state(config, out_dir)?;
    let analysis = &state.prepared.dataset;

    // Average effects per outcome column, bootstrap over resampled
    // clusters with the propensity re-estimated per replication.
    let avg_cfg = BootstrapConfig::new(
        config.infer.average_replications,
        derive_seed(seed, "avg-bootstrap-root", 0),
    )?;
    let mut outcomes = Vec::new();
    for col in 0..analysis.n_outcomes() {
        let est = bootstrap_averages(
            analysis,
            &state.prepared.phat,
            col,
            config.infer.reestimate_propensity,
            &avg_cfg,
        )?;
        outcomes.push(OutcomeAverages {
            outcome: analysis.outcome_names()[col].clone(),
            ate: effect_row(&est[0]),
            atet: effect_row(&est[1]),
            atent: effect_row(&est[2]),
        });
    }
    write_json(
        &out_dir.join("averages.json"),
        &AveragesReport {
            replications: config.infer.average_replications,
            reestimate_propensity: config.infer.reestimate_propensity,
            outcomes,
        },
    )?;
    artifacts.push("averages.json".into());

    // Effect curve across outcome columns with potential-outcome levels.
    let curve = monthly_effect_curve(
        analysis.outcomes(),
        analysis.treatment(),
        &state.prepared.phat,
        &state.prepared.weights,
    )?;
    let mut curve_csv = CsvWriter::create(
        &out_dir.join("curve.csv"),
        &[
            "outcome",
            "ate",
            "atet",
            "atent",
            "level_treated",
            "level_control",
            "atet_level_treated",
            "atet_level_control",
        ],
    )?;
    for row in &curve {
        curve_csv.row(&[
            analysis.outcome_names()[row.column].clone(),
            fmt_f64(row.ate),
            fmt_f64(row.atet),
            fmt_f64(row.atent),
            fmt_f64(row.level_treated),
            fmt_f64(row.level_control),
            fmt_f64(row.atet_level_treated),
            fmt_f64(row.atet_level_control),
        ])?;
    }
    curve_csv.finish()?;
    artifacts.push("curve.csv".into());

    // CATE standard errors with frozen selected sets.
    let treated: Vec<bool> = analysis.treatment().to_vec();
    let controls: Vec<bool> = treated.iter().map(|&t| !t).collect();
    let groups = vec![
        ("all".to_string(), vec![true; analysis.n()]),
        ("treated".to_string(), treated),
        ("controls".to_string(), controls),
    ];
    let cate_cfg = BootstrapConfig::new(
        config.infer.cate_replications,
        derive_seed(seed, "cate-bootstrap-root", 0),
    )?;
    let boot = bootstrap_cates(
        analysis,
        &state.prepared.weights,
        &state.splits,
        &state.ensemble.bagged,
        state.outcome_col,
        &groups,
        &cate_cfg,
    )?;

    let mut sigma_csv =
        CsvWriter::create(&out_dir.join("sigma_i.csv"), &["obs_id", "gamma_bar", "sigma_i"])?;
    for i in 0..analysis.n() {
        sigma_csv.row(&[
            analysis.obs_ids()[i].to_string(),
            fmt_f64(state.ensemble.bagged[i]),
            fmt_f64(boot.sigma_i[i]),
        ])?;
    }
    sigma_csv.finish()?;
    artifacts.push("sigma_i.csv".into());

    write_json(
        &out_dir.join("groups.json"),
        &GroupsReport {
            replications_requested: boot.b_requested,
            replications_used: boot.b_used,
            excluded: boot.excluded,
            groups: boot
                .groups
                .iter()
                .map(|g| GroupRow {
                    label: g.label.clone(),
                    point: g.point,
                    se: g.se,
                    stars: significance_stars(g.point, g.se).to_string(),
                })
                .collect(),
        },
    )?;
    artifacts.push("groups.json".into());

    let summary = cate_summary(
        &analysis.outcome_names()[state.outcome_col],
        &state.ensemble.bagged,
        &boot.sigma_i,
    )?;
    write_json(&out_dir.join("cate_summary.json"), &summary)?;
    let mut summary_csv = CsvWriter::create(
        &out_dir.join("cate_summary.csv"),
        &["label", "mean", "median", "sd", "min", "max", "mean_se"],
    )?;
    summary_csv.row(&[
        summary.label.clone(),
        fmt_f64(summary.mean),
        fmt_f64(summary.median),
        fmt_f64(summary.sd),
        fmt_f64(summary.min),
        fmt_f64(summary.max),
        fmt_f64(summary.mean_se),
    ])?;
    summary_csv.finish()?;
    artifacts.push("cate_summary.json".into());
    artifacts.push("cate_summary.csv".into());

    manifest::write(
        out_dir,
        &Manifest {
            command: "infer".into(),
            config_hash: hash,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            artifacts,
        },
    )
}
