//! Seed lineage and counter-style pseudorandom functions.
//!
//! Every random quantity in the crate is a pure function of a 64-bit seed and
//! a structured key, so that replicas are reproducible bit-for-bit regardless
//! of scheduling. The mixing function is the SplitMix64 finalizer:
//!
//! ```text
//! mix64(z):
//!     z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9   (wrapping)
//!     z = (z ^ (z >> 27)) * 0x94d049bb133111eb   (wrapping)
//!     return z ^ (z >> 31)
//! ```
//!
//! Child seeds are derived as
//!
//! ```text
//! tag_hash(tag) = FNV-1a 64 of the UTF-8 bytes of tag
//! derive_seed(master, tag, index) =
//!     mix64( mix64(master ^ tag_hash(tag)) + mix64(index + GOLDEN) )
//! ```
//!
//! with `GOLDEN = 0x9e3779b97f4a7c15` and all additions wrapping. Streams that
//! need an ordinary sequential generator (the direct CTMC engine, the walk
//! sampler) are `ChaCha8Rng::seed_from_u64(child_seed)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Sequential generator used wherever a stream, rather than a keyed draw, is needed.
pub type Stream = ChaCha8Rng;

#[inline]
pub const fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub const fn tag_hash(tag: &str) -> u64 {
    let bytes = tag.as_bytes();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    h
}

pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    mix64(mix64(master ^ tag_hash(tag)).wrapping_add(mix64(index.wrapping_add(GOLDEN))))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Incremental keyed hash: absorb words one at a time, then read a uniform.
#[derive(Debug, Clone, Copy)]
pub struct KeyHasher(u64);

impl KeyHasher {
    #[inline]
    pub fn new(seed: u64, domain: u64) -> Self {
        KeyHasher(mix64(seed ^ domain))
    }

    #[inline]
    pub fn absorb(self, word: u64) -> Self {
        KeyHasher(mix64(self.0.wrapping_add(GOLDEN) ^ word))
    }

    #[inline]
    pub fn absorb_coords(mut self, coords: &[i32]) -> Self {
        for &c in coords {
            self = self.absorb(c as i64 as u64);
        }
        self
    }

    #[inline]
    pub fn finish(self) -> u64 {
        mix64(self.0 ^ 0x2545_f491_4f6c_dd1d)
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn uniform(self) -> f64 {
        open_unit(self.finish())
    }
}

/// Maps 64 random bits to the open interval (0, 1) with 53-bit resolution.
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Unit-rate exponential variate from 64 random bits.
#[inline]
pub fn unit_exponential(bits: u64) -> f64 {
    -open_unit(bits).ln()
}
