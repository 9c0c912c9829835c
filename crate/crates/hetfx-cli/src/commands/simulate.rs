//! `hetfx simulate`: generate a synthetic dataset with its ground-truth
//! sidecar.

use anyhow::{Context, Result};
use hetfx::stats;
use hetfx::synth::{generate, named_config, DgpConfig};
use serde::Serialize;
use std::path::Path;

use crate::config::RunConfig;
use crate::manifest::{self, Manifest};
use crate::output::write_json;

#[derive(Serialize)]
struct TruthSidecar {
    config: DgpConfig,
    true_ate: f64,
    true_atet: f64,
    true_atent: f64,
    /// FNV-1a hash over the little-endian bytes of the per-observation
    /// effect vector.
    tau_digest: String,
    tau_mean: f64,
    tau_sd: f64,
    tau_min: f64,
    tau_max: f64,
    horizon_fractions: Vec<f64>,
}

fn tau_digest(tau: &[f64]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for v in tau {
        for b in v.to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    format!("fnv1a64:{hash:016x}")
}

pub fn run(config: &RunConfig, raw_config: &str, out_dir: &Path, seed: u64) -> Result<()> {
    manifest::ensure_fresh(out_dir, "simulate")?;
    let section = config
        .simulate
        .as_ref()
        .context("`hetfx simulate` needs a [simulate] section")?;
    let dgp: DgpConfig = match (&section.dgp, &section.name) {
        (Some(dgp), _) => dgp.clone(),
        (None, Some(name)) => named_config(name)?,
        (None, None) => anyhow::bail!("[simulate] needs `name` or an inline `dgp` table"),
    };

    let (dataset, truth) = generate(&dgp)?;
    let data_path = out_dir.join("dataset.csv");
    let schema = hetfx::data::save_dataset(&dataset, &data_path)?;
    write_json(&out_dir.join("schema.json"), &schema)?;

    let sidecar = TruthSidecar {
        true_ate: truth.ate,
        true_atet: truth.atet,
        true_atent: truth.atent,
        tau_digest: tau_digest(&truth.tau),
        tau_mean: stats::mean(&truth.tau),
        tau_sd: if truth.tau.len() > 1 {
            stats::variance(&truth.tau, 1).sqrt()
        } else {
            0.0
        },
        tau_min: truth.tau.iter().cloned().fold(f64::INFINITY, f64::min),
        tau_max: truth.tau.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        horizon_fractions: truth.horizon_fractions.clone(),
        config: dgp,
    };
    write_json(&out_dir.join("truth.json"), &sidecar)?;

    manifest::write(
        out_dir,
        &Manifest {
            command: "simulate".into(),
            config_hash: manifest::config_hash(raw_config),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            artifacts: vec!["dataset.csv".into(), "schema.json".into(), "truth.json".into()],
        },
    )
}
