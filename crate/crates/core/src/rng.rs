//! Counter-based random streams.
//!
//! Every draw in the crate comes from a generator keyed by
//! `(seed, step, purpose)`. Two runs that evaluate gradients at step `t` with
//! the same seed see the same noise regardless of how many draws happened
//! before, which is what lets different optimizer formulations be compared
//! trajectory-by-trajectory on stochastic problems.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Purpose tag separating independent streams that share a seed and step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stream {
    Gradient,
    Init,
    Data,
    Draw,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Gradient => 0x6772_6164,
            Stream::Init => 0x696e_6974,
            Stream::Data => 0x6461_7461,
            Stream::Draw => 0x6472_6177,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseKey {
    pub seed: u64,
    pub step: u64,
    pub stream: Stream,
}

impl NoiseKey {
    pub fn new(seed: u64, step: u64, stream: Stream) -> Self {
        Self { seed, step, stream }
    }

    pub fn gradient(seed: u64, step: u64) -> Self {
        Self::new(seed, step, Stream::Gradient)
    }

    /// A fresh generator positioned at the start of this key's stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.seed ^ self.stream.tag().rotate_left(32);
        let mut key = [0u8; 32];
        let words = [
            splitmix64(&mut state),
            splitmix64(&mut state) ^ self.step,
            splitmix64(&mut state),
            splitmix64(&mut state) ^ self.stream.tag(),
        ];
        for (i, w) in words.iter().enumerate() {
            // Mix once more so neighbouring steps differ in every byte.
            let mut s = *w;
            key[i * 8..(i + 1) * 8].copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
