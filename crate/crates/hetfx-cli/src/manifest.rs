//! Per-command run manifests: every command writes one listing its
//! artifacts together with the config hash, the effective seed, and the
//! library version. Downstream commands refuse to run against a different
//! config or seed, and a command never overwrites its own artifacts.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub artifacts: Vec<String>,
}

pub fn config_hash(raw_config: &str) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in raw_config.as_bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    format!("fnv1a64:{hash:016x}")
}

pub fn manifest_path(out_dir: &Path, command: &str) -> PathBuf {
    out_dir.join(format!("{command}.manifest.json"))
}

/// Refuse to rerun a command into the same directory.
pub fn ensure_fresh(out_dir: &Path, command: &str) -> Result<()> {
    let path = manifest_path(out_dir, command);
    if path.exists() {
        bail!(
            "{} already exists: `{command}` already ran in this directory; use a fresh --out",
            path.display()
        );
    }
    Ok(())
}

pub fn write(out_dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = manifest_path(out_dir, &manifest.command);
    let body = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, body + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn read(out_dir: &Path, command: &str) -> Result<Manifest> {
    let path = manifest_path(out_dir, command);
    let raw = std::fs::read_to_string(&path).with_context(|| {
        format!(
            "missing {}: run `hetfx {command}` into this directory first",
            path.display()
        )
    })?;
    serde_json::from_str(&raw).with_context(|| format!("cannot parse {}", path.display()))
}

/// Gate a downstream command on an upstream manifest with the same config
/// and seed.
pub fn require_upstream(
    out_dir: &Path,
    upstream: &str,
    config_hash_now: &str,
    seed_now: u64,
) -> Result<Manifest> {
    let m = read(out_dir, upstream)?;
    if m.config_hash != config_hash_now {
        bail!(
            "stale {upstream} manifest: it was produced with config hash {} but the current config hashes to {config_hash_now}; rerun `hetfx {upstream}` with this config",
            m.config_hash
        );
    }
    if m.seed != seed_now {
        bail!(
            "stale {upstream} manifest: it was produced with seed {} but the current seed is {seed_now}; rerun `hetfx {upstream}`",
            m.seed
        );
    }
    Ok(m)
}
