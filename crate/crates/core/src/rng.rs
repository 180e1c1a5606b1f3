//! Splittable, counter-based random streams.
//!
//! Every stochastic routine in this crate takes a [`Stream`] instead of a
//! shared RNG. A stream is a 64-bit key; `child(i)` derives a statistically
//! independent sub-key by avalanche mixing, and `rng()` expands the key into
//! a ChaCha8 generator. Because the key of any replicate is a pure function
//! of `(master seed, index path)`, the set of replicates produced by a batch
//! is identical under any parallel schedule.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; a full-avalanche mix of a 64-bit word.
#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A derivable random stream identified by a 64-bit key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stream {
    key: u64,
}

impl Stream {
    /// Root stream for a master seed.
    pub fn new(master_seed: u64) -> Self {
        Stream {
            key: splitmix64(master_seed),
        }
    }

    /// Raw key; a child stream can be reconstructed from it with [`Stream::from_key`].
    pub fn key(&self) -> u64 {
        self.key
    }

    /// Rebuild a stream from a previously exported key.
    pub fn from_key(key: u64) -> Self {
        Stream { key }
    }

    /// Derive the `i`-th child stream.
    pub fn child(&self, i: u64) -> Self {
        Stream {
            key: splitmix64(self.key ^ splitmix64(i ^ 0xA5A5_A5A5_5A5A_5A5A)),
        }
    }

    /// Derive a child keyed by a byte string (used for config-level cell keys).
    pub fn child_named(&self, name: &str) -> Self {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325; // FNV-1a offset basis
        for &b in name.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        Stream {
            key: splitmix64(self.key ^ splitmix64(h)),
        }
    }

    /// Expand the key into a ChaCha8 generator.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut s = self.key;
        for chunk in seed.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}
