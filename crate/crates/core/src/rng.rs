//! Counter-based seeding: one ChaCha stream per lattice cell, one seed per sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 0x5EED;

pub const SEED_ENV: &str = "SPECTRAL_LAB_SEED";

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

/// Stream id of the cell with integer lattice index `j` (zigzag-encoded,
/// 21 bits per axis).
pub fn cell_stream(j: [i64; 3]) -> u64 {
    let mask = (1u64 << 21) - 1;
    (zigzag(j[0]) & mask) << 42 | (zigzag(j[1]) & mask) << 21 | (zigzag(j[2]) & mask)
}

pub fn cell_rng(seed: u64, j: [i64; 3]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell_stream(j));
    rng
}

/// Seed of Monte-Carlo sample `index` under `master`.
pub fn sample_seed(master: u64, index: u64) -> u64 {
    master ^ index
}

pub fn sample_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sample_seed(master, index))
}

/// Parses decimal or 0x-prefixed hexadecimal seeds.
pub fn parse_seed(s: &str) -> Option<u64> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}
