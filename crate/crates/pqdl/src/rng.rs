//! Pinned random number generation.
//!
//! Every source of randomness in this crate flows through the generator
//! defined here, never through an ambient library RNG. The generator is
//! xoshiro256** seeded through SplitMix64, and independent streams are derived
//! by hashing a root seed together with a purpose tag and a small key vector.
//! Two builds of this crate therefore produce bit-identical random sequences
//! for the same `(seed, purpose, keys)` triple, which is what the prequential
//! codec relies on: the decoder must replay the encoder's training runs
//! exactly.

/// Purpose tag for a derived stream. One stream per use-site keeps the
/// consumers independent: drawing more dropout masks, say, never shifts the
/// shuffle order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Weight initialization.
    Init,
    /// Minibatch shuffling.
    Shuffle,
    /// Dropout masks.
    Dropout,
    /// Bootstrap resampling.
    Bootstrap,
    /// Train/calibration splits.
    Split,
    /// Prefix-chain permutations.
    Chain,
    /// Synthetic dataset generation.
    Synth,
    /// Calibration minibatch selection.
    CalibBatch,
    /// Per-block seeds inside a prequential walk.
    Block,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 0x01,
            Stream::Shuffle => 0x02,
            Stream::Dropout => 0x03,
            Stream::Bootstrap => 0x04,
            Stream::Split => 0x05,
            Stream::Chain => 0x06,
            Stream::Synth => 0x07,
            Stream::CalibBatch => 0x08,
            Stream::Block => 0x09,
        }
    }
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// xoshiro256** generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Expands a 64-bit seed into the full state via SplitMix64.
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = splitmix64(&mut sm);
        }
        // xoshiro's all-zero state is absorbing; SplitMix64 cannot produce
        // four zero outputs in a row from any seed, but guard anyway.
        if s == [0, 0, 0, 0] {
            s[0] = 1;
        }
        Rng { s }
    }

    /// Derives the stream for `(seed, purpose, keys)`.
    pub fn stream(seed: u64, purpose: Stream, keys: &[u64]) -> Self {
        let mut sm = seed ^ purpose.tag().wrapping_mul(0xa076_1d64_78bd_642f);
        let mut acc = splitmix64(&mut sm);
        for &k in keys {
            sm ^= k.wrapping_mul(0xe703_7ed1_a0b4_28db);
            acc ^= splitmix64(&mut sm);
        }
        Rng::from_seed(acc)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1]
            .wrapping_mul(5)
            .rotate_left(7)
            .wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n) via the multiply-shift reduction.
    /// The bias is at most n / 2^64, negligible for the index ranges used here.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms.
    pub fn normal(&mut self) -> f64 {
        let mut u1 = self.next_f64();
        // Avoid ln(0).
        if u1 <= 0.0 {
            u1 = f64::MIN_POSITIVE;
        }
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// First `k` elements of a Fisher-Yates shuffle of `0..n`:
    /// a uniform sample of `k` distinct indices, in sampled order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}

/// FNV-1a over arbitrary bytes; used for config hashes and parameter
/// checksums (corruption detection, not cryptography).
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// FNV-1a over a slice of f64s, hashing their IEEE-754 bit patterns.
pub fn fnv1a_f64(xs: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &x in xs {
        for b in x.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
