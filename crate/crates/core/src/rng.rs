//! Seeded random streams.
//!
//! Every consumer derives its generator from a master seed and a stream
//! number, so results do not depend on how work is scheduled.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream used for data generation.
pub const DATA_STREAM: u64 = 0;

/// Generator for stream `stream` of `master`.
pub fn substream(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Stream of permutation replicate `b` (0-based); never the data stream.
pub fn replicate_stream(master: u64, b: usize) -> ChaCha8Rng {
    substream(master, b as u64 + 1)
}

/// Uniformly random permutation of `0..n`.
pub fn permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
