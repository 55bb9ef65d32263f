//! Deterministic random streams.
//!
//! Every independent unit of work (one simulated state, one training run, one
//! replica) draws from its own ChaCha stream keyed by the master seed, a
//! domain tag and the unit index. Results therefore do not depend on how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub mod domain {
    pub const STATE: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const INIT: u64 = 4;
    pub const COMPARE: u64 = 5;
    pub const ROBUSTNESS: u64 = 6;
    pub const REPLICA: u64 = 7;
    pub const ANALOG: u64 = 8;
    pub const GRID: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed; used where a plain `u64` seed must be handed on.
pub fn derive_seed(master: u64, domain: u64, unit: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(domain)) ^ unit)
}

pub fn stream(master: u64, domain: u64, unit: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master ^ splitmix64(domain)));
    rng.set_stream(unit);
    rng
}
