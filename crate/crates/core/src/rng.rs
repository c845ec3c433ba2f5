//! Seeded random streams.
//!
//! Every run owns a single 64-bit seed. Subsystems draw from independent
//! ChaCha8 streams keyed by `(seed, stream id)`, so adding draws in one
//! subsystem never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Well-known stream ids. Per-patient streams start at [`PATIENT_BASE`].
pub mod stream {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const ACTOR: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const RECONSTRUCT: u64 = 5;
    pub const FQE: u64 = 6;
    pub const COVERAGE: u64 = 7;
    pub const EVAL: u64 = 8;
    pub const PATIENT_BASE: u64 = 1 << 32;
}

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
