//! Seeded, portable random streams.
//!
//! Everything random in the crate draws from ChaCha8 keyed by the user seed,
//! with an independent stream per consumer (camera sampling, point sampling,
//! each RANSAC hypothesis, ...). Streams can be consumed in any order or in
//! parallel without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
