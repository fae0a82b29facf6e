//! Seed splitting. Every consumer of randomness in an episode draws from its
//! own ChaCha stream so swapping one component does not perturb another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CEM_STREAM: u64 = 1;
pub const HUMAN_STREAM: u64 = 2;
pub const JITTER_STREAM: u64 = 3;

pub fn stream(seed: u64, label: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}
