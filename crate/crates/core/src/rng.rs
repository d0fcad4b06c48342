//! Counter-based random streams.
//!
//! Every random draw in the crate is addressed by a [`StreamKey`]: the
//! global seed, a run (or replicate) index, the time step, the index of the
//! particle or target, and the purpose of the draw. The key is hashed into
//! a 64-bit stream identifier and the generator output is a pure function
//! of `(stream, counter)`, so results do not depend on how work is split
//! across threads or in which order runs are executed.
//!
//! The output function is the SplitMix64 finalizer applied to
//! `stream + counter * GOLDEN_GAMMA`.

use rand_core::{impls, RngCore};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for a named sub-experiment.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(mix64(seed ^ GOLDEN_GAMMA) ^ h)
}

/// What a draw is used for. Distinct purposes never share a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Initial = 1,
    Select = 2,
    MutationCoin = 3,
    Move = 4,
    Immigrant = 5,
    ImmigrantCount = 6,
    Survival = 7,
    Spawn = 8,
    Birth = 9,
}

/// Address of a random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub run: u64,
    pub step: u64,
    pub index: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(seed: u64, run: u64, step: usize, index: usize, purpose: Purpose) -> Self {
        Self {
            seed,
            run,
            step: step as u64,
            index: index as u64,
            purpose,
        }
    }

    fn stream_id(&self) -> u64 {
        let mut h = mix64(self.seed ^ 0x5851_f42d_4c95_7f2d);
        for word in [self.run, self.step, self.index, self.purpose as u64] {
            h = mix64(h.wrapping_add(GOLDEN_GAMMA) ^ mix64(word.wrapping_add(GOLDEN_GAMMA)));
        }
        h
    }

    pub fn rng(&self) -> CounterRng {
        CounterRng {
            stream: self.stream_id(),
            counter: 0,
        }
    }
}

/// Stateless-by-construction generator: output `k` of a stream is
/// `mix64(stream + (k + 1) * GOLDEN_GAMMA)`.
#[derive(Clone, Debug)]
pub struct CounterRng {
    stream: u64,
    counter: u64,
}

impl CounterRng {
    pub fn keyed(seed: u64, run: u64, step: usize, index: usize, purpose: Purpose) -> Self {
        StreamKey::new(seed, run, step, index, purpose).rng()
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.stream.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
