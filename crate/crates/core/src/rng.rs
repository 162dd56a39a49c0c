//! Seeded, platform-independent random streams.
//!
//! Every random decision in the crate draws from ChaCha8 keyed by a user seed,
//! with independent streams selected by a small integer (restart index, trial
//! index, ...). The same `(seed, stream)` pair replays bit-exactly everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Generator = ChaCha8Rng;

pub fn generator(seed: u64, stream: u64) -> Generator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Stream ids reserved per consumer so that e.g. generation and solving
// with the same seed never share draws.
pub(crate) const STREAM_GENERATE: u64 = 0x6765_6e00_0000_0000;
pub(crate) const STREAM_SOLVER: u64 = 0x736f_6c76_0000_0000;
pub(crate) const STREAM_KMEANS: u64 = 0x6b6d_6e73_0000_0000;
