//! Counter-based random numbers.
//!
//! Every draw is a pure function of a key path (seed, stream, trial, ...)
//! and an index, so results do not depend on evaluation order or on how
//! work is split across threads.

use crate::dist::norm_quantile;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const FORK_SALT: u64 = 0xD1B5_4A32_D192_ED03;

#[inline(always)]
fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A keyed, stateless generator. `fork` derives an independent child key;
/// the `*_at` methods evaluate the stream at a given counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: mix(seed.wrapping_add(GOLDEN)) }
    }

    /// Child generator for sub-stream `label`.
    #[inline]
    pub fn fork(self, label: u64) -> Self {
        Self {
            key: mix(self.key ^ mix(label.wrapping_add(FORK_SALT))),
        }
    }

    /// Output `index` of the splitmix64 sequence started at the key.
    #[inline(always)]
    pub fn u64_at(self, index: u64) -> u64 {
        mix(self.key.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    #[inline(always)]
    pub fn uniform_at(self, index: u64) -> f64 {
        ((self.u64_at(index) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion.
    #[inline]
    pub fn normal_at(self, index: u64) -> f64 {
        norm_quantile(self.uniform_at(index))
    }
}
