//! Counter-based random streams.
//!
//! Every rollout draws from its own generator keyed by `(seed, update, sample)`
//! so that results do not depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for sample `sample` of iteration `update` under `seed`.
pub fn stream(seed: u64, update: usize, sample: usize) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((update as u64) << 32) | (sample as u64 & 0xffff_ffff));
    rng
}
