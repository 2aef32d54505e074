//! Seeded random streams.
//!
//! Every random quantity in an experiment comes from a ChaCha8 stream
//! identified by the master seed and a path of indices, e.g.
//! `[CODE, code_index]` or `[TRIAL, code_index, trial_index, NOISE_Y]`.
//! The path is folded with SplitMix64 into a 64-bit stream id; the master
//! seed keys the generator and the id selects its stream. Two streams with
//! different paths are therefore independent, and a stream never depends
//! on the order in which workers happen to run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Path tags for the first element of a stream path.
pub mod tag {
    pub const CODE: u64 = 1;
    pub const TRIAL: u64 = 2;
    pub const SCAN: u64 = 3;
    pub const WIRETAP: u64 = 4;
    pub const KM: u64 = 5;
    pub const AUX: u64 = 6;

    /// Sub-streams within one trial.
    pub const SOURCE: u64 = 10;
    pub const NOISE_Y: u64 = 11;
    pub const NOISE_Z: u64 = 12;
    pub const LOCAL_RANDOMNESS: u64 = 13;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds a path into a stream id.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(path.len() as u64), |h, &p| {
        splitmix64(h ^ splitmix64(p))
    })
}

/// The generator for `path` under `master_seed`.
pub fn stream(master_seed: u64, path: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(path));
    rng
}
