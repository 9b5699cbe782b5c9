//! Reproducible random streams keyed by (seed, engine, step).
//!
//! Every stream is an independent ChaCha8 generator whose key is derived from
//! the triple, so results do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Stream = ChaCha8Rng;

/// Engine identifiers used as the second key component.
pub mod engine {
    pub const TRUTH: u64 = 1;
    pub const OBSERVATION: u64 = 2;
    pub const PARTICLE: u64 = 3;
    pub const INITIAL: u64 = 4;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The stream for one (seed, engine, step) triple.
pub fn stream(seed: u64, engine: u64, step: u64) -> Stream {
    let mut key = [0u8; 32];
    let words = [
        splitmix(seed),
        splitmix(seed ^ splitmix(engine)),
        splitmix(step ^ splitmix(engine.wrapping_add(seed))),
        splitmix(seed.wrapping_add(step).wrapping_add(engine << 32)),
    ];
    for (chunk, w) in key.chunks_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

#[inline]
pub fn normal(rng: &mut Stream) -> f64 {
    StandardNormal.sample(rng)
}
