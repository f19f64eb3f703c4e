//! Deterministic random-number streams for parallel replication.
//!
//! Every Monte Carlo replicate draws from a generator derived purely from
//! (master seed, cell key, replicate index), so results are independent of
//! scheduling and worker counts, and no stream is reused across cells.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; statistically mixes all input bits.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a value into a running key.
pub fn mix(key: u64, value: u64) -> u64 {
    splitmix64(key ^ value.wrapping_mul(GOLDEN))
}

/// Stable key for a simulation cell built from its parameter words.
pub fn cell_key(words: &[u64]) -> u64 {
    words.iter().fold(0x842F_0E1F_u64, |acc, &w| mix(acc, w))
}

/// Generator for replicate `rep` of cell `cell` under `master`.
pub fn replicate_rng(master: u64, cell: u64, rep: u64) -> ChaCha8Rng {
    let mut state = mix(mix(mix(0, master), cell), rep);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
