//! Deterministic random-stream derivation.
//!
//! Every stochastic step in the pipeline (splits, folds, bootstrap
//! replications, rule randomization) draws from a ChaCha stream seeded by a
//! value derived from the master seed, a domain label, and a counter. Streams
//! are therefore independent of evaluation order and of how many of them a
//! run requests: adding splits or replications never reshuffles earlier ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Derive a child seed from `(master, domain, counter)`.
pub fn derive_seed(master: u64, domain: &str, counter: u64) -> u64 {
    let mut state = splitmix64(master ^ fnv1a64(domain.as_bytes()));
    state = splitmix64(state ^ counter);
    splitmix64(state)
}

/// Deterministic generator for a derived seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for a named child stream.
pub fn stream_rng(master: u64, domain: &str, counter: u64) -> ChaCha8Rng {
    seeded_rng(derive_seed(master, domain, counter))
}
