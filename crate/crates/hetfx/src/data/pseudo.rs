//! Pseudo participation starts for controls.
//!
//! Each control draws a start from the empirical distribution of treated
//! start durations, within its stratum when strata are supplied. Controls
//! whose observed exit precedes the drawn start are flagged ineligible and
//! should be dropped by the caller: both groups must still be at risk at
//! their (pseudo) start dates.

use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use rand::Rng;
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoStart {
    pub start: f64,
    /// False when the control exited before the assigned start.
    pub eligible: bool,
}

/// Assign pseudo starts to controls. `strata`, when given, must supply one
/// label per treated observation and one per control; every control stratum
/// needs at least one treated donor.
pub fn assign_pseudo_starts(
    treated_starts: &[f64],
    control_exits: &[f64],
    strata: Option<(&[String], &[String])>,
    seed: u64,
) -> Result<Vec<PseudoStart>> {
    if treated_starts.is_empty() {
        return Err(Error::InvalidArgument("no treated start durations supplied".into()));
    }
    let donor_pools: HashMap<Option<&str>, Vec<f64>> = match strata {
        None => {
            let mut m = HashMap::new();
            m.insert(None, treated_starts.to_vec());
            m
        }
        Some((treated_strata, control_strata)) => {
            if treated_strata.len() != treated_starts.len() {
                return Err(Error::InvalidArgument(
                    "treated strata length must match treated starts".into(),
                ));
            }
            if control_strata.len() != control_exits.len() {
                return Err(Error::InvalidArgument(
                    "control strata length must match control exits".into(),
                ));
            }
            let mut m: HashMap<Option<&str>, Vec<f64>> = HashMap::new();
            for (label, &start) in treated_strata.iter().zip(treated_starts) {
                m.entry(Some(label.as_str())).or_default().push(start);
            }
            m
        }
    };

    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(control_exits.len());
    for (i, &exit) in control_exits.iter().enumerate() {
        let key: Option<&str> = match strata {
            None => None,
            Some((_, control_strata)) => Some(control_strata[i].as_str()),
        };
        let pool = donor_pools.get(&key).ok_or_else(|| {
            Error::Degenerate(format!(
                "stratum '{}' has no treated donors",
                key.unwrap_or("<unstratified>")
            ))
        })?;
        let start = pool[rng.gen_range(0..pool.len())];
        out.push(PseudoStart {
            start,
            eligible: exit >= start,
        });
    }
    Ok(out)
}
