//! Seeded random streams.
//!
//! Every stochastic routine in the crate draws from [`ChaCha8Rng`], a
//! portable stream cipher generator whose output is identical on every
//! platform. Gaussian draws use `rand_distr::StandardNormal` (ziggurat over
//! the uniform stream), which is likewise deterministic.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as SimRng;

/// Generator for a top-level seed.
pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Independent generator for a labelled sub-stream of `seed`.
///
/// Uses the ChaCha stream id so that e.g. task-vector sampling and batch
/// sampling for the same run seed never share draws.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const TASK_VECTORS: u64 = 1;
    pub const BATCHES: u64 = 2;
    pub const INIT: u64 = 3;
    pub const DATA: u64 = 4;
    pub const EVAL: u64 = 5;
}
