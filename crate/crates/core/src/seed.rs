//! Deterministic seed derivation.
//!
//! Every randomized stage (partition sampling, fold assignment, optimizer
//! jitter, simulation streams) draws its seed from a single master seed via
//! `child_seed(master, label)`. The scheme is fixed: FNV-1a over the label,
//! XORed into the master, then finalized with SplitMix64. Reports produced
//! under the same master seed are therefore bit-reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for a named child stream from a master seed.
pub fn child_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a(label.as_bytes()))
}

/// Derives a seed indexed within a named family (e.g. one per partition).
pub fn indexed_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(child_seed(master, label) ^ splitmix64(index))
}

/// Deterministic RNG for a named child stream.
pub fn child_rng(master: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(child_seed(master, label))
}

/// Deterministic RNG for an indexed child stream.
pub fn indexed_rng(master: u64, label: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(indexed_seed(master, label, index))
}
