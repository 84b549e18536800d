//! Reproducible, independent random streams.
//!
//! Every consumer of randomness derives its generator from a user seed, a
//! [`Stream`] tag and an index (restart number, draw number, ...). Streams
//! with different tags or indices never overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Prior = 1,
    Init = 2,
    Posterior = 3,
    Simulation = 4,
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> StreamRng {
    assert!(index < 1 << 48, "stream index {index} out of range");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 48) | index);
    rng
}
