//! Reproducible random streams: one ChaCha8 stream per (master seed, task).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for task `stream` under master seed `seed`. Streams are
/// independent of scheduling order, so parallel runs replay exactly.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
