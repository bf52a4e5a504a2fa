//! Counter-based random numbers.
//!
//! Every draw is a pure function of a key tuple `(seed, tag, a, b, index)`,
//! so results never depend on query order or on which thread asks. The mixer
//! is the SplitMix64 finalizer applied in a chain over the key words.
//!
//! Gaussian draws use the cosine branch of Box–Muller on the draw pair
//! `(2k, 2k + 1)`; the sine branch is discarded so that normal `k` always
//! maps to the same two counters.

use core::f64::consts::PI;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a key tuple into a 64-bit word.
#[inline]
pub fn hash_words(words: &[u64]) -> u64 {
    let mut h = 0x6A09_E667_F3BC_C908;
    for &w in words {
        h = splitmix(h ^ splitmix(w));
    }
    h
}

/// Maps a 64-bit word to `[0, 1)` with 53 bits of precision.
#[inline]
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A keyed stream: `(seed, tag, a, b)` fixed, draws indexed by a counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterStream {
    key: [u64; 4],
}

impl CounterStream {
    pub fn new(seed: u64, tag: u64, a: u64, b: u64) -> Self {
        Self { key: [seed, tag, a, b] }
    }

    #[inline]
    pub fn word(&self, index: u64) -> u64 {
        let [s, t, a, b] = self.key;
        hash_words(&[s, t, a, b, index])
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&self, index: u64) -> f64 {
        unit_f64(self.word(index))
    }

    /// Standard normal number `k`, consuming counters `2k` and `2k + 1`.
    pub fn normal(&self, k: u64) -> f64 {
        // 1 - u lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.uniform(2 * k);
        let u2 = self.uniform(2 * k + 1);
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
    }
}

/// Sequential generator over a [`CounterStream`], for algorithms that just
/// need "the next number" (shuffles, graph rewiring, k-means seeding).
#[derive(Clone, Debug)]
pub struct SeqRng {
    stream: CounterStream,
    counter: u64,
}

impl SeqRng {
    pub fn new(seed: u64, tag: u64) -> Self {
        Self { stream: CounterStream::new(seed, tag, 0, 0), counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let w = self.stream.word(self.counter);
        self.counter += 1;
        w
    }

    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    /// Uniform integer in `[0, bound)`; `bound` must be positive.
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        // Lemire's multiply-shift; the bias is below 2^-64 * bound.
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
