//! Deterministic seed derivation.
//!
//! Every random draw in the harness comes from a ChaCha stream whose seed is
//! derived from a root seed plus a path of integers (step, member, ...), so
//! results never depend on call order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep unrelated consumers of the same root seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Rollout = 2,
    JudgeNoise = 3,
    DataOrder = 4,
    Pairs = 5,
    Task = 6,
    Audit = 7,
    Eval = 8,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds a path of integers into a single 64-bit seed.
pub fn derive_seed(root: u64, stream: Stream, path: &[u64]) -> u64 {
    let mut h = splitmix64(root ^ splitmix64(stream as u64));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn stream_rng(root: u64, stream: Stream, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, stream, path))
}
