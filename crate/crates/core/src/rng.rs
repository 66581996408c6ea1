//! Per-item random streams.
//!
//! Every random decision in the pipeline draws from a generator seeded by a
//! 64-bit hash of `(global seed, item id, epoch)`, so an item's output never
//! depends on iteration order or worker count.
//!
//! - seed hash: FNV-1a 64 over `seed (LE) || len(id) (LE u64) || id || epoch (LE)`,
//!   finished with the SplitMix64 mixer.
//! - generator: ChaCha8 (`rand_chacha`), seeded with `seed_from_u64`.
//! - uniform `f64`: 53 random mantissa bits, in `[0, 1)`.
//! - normal: Marsaglia polar method; the second variate of each pair is discarded.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fixed 64-bit hash of `(seed, id, epoch)`.
pub fn derive_seed(seed: u64, id: &str, epoch: u64) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
    h = fnv1a(h, &(id.len() as u64).to_le_bytes());
    h = fnv1a(h, id.as_bytes());
    h = fnv1a(h, &epoch.to_le_bytes());
    splitmix64(h)
}

/// Deterministic generator for one item in one epoch.
#[derive(Debug, Clone)]
pub struct ItemRng {
    inner: ChaCha8Rng,
}

impl ItemRng {
    pub fn derive(seed: u64, id: &str, epoch: u64) -> Self {
        ItemRng::from_seed(derive_seed(seed, id, epoch))
    }

    pub fn from_seed(seed: u64) -> Self {
        ItemRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        self.inner.random_range(lo..=hi)
    }

    pub fn standard_normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    pub fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.standard_normal()
    }

    /// Fisher–Yates shuffle, highest index first.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.int_inclusive(0, i as u64) as usize;
            items.swap(i, j);
        }
    }
}
