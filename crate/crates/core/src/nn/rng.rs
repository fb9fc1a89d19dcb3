use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic, platform-independent random source.
///
/// Every stochastic operation in the crate takes a `&mut SeededRng`; two
/// generators built from the same seed yield the same draw sequence.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Seed derived from a base seed and a list of coordinates. The result is
    /// a pure function of its inputs, so callers can hand out per-task seeds
    /// without depending on evaluation order.
    pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
        let mut h = splitmix64(base ^ 0x6a09_e667_f3bc_c909);
        for &c in coords {
            h = splitmix64(h ^ splitmix64(c));
        }
        h
    }

    pub fn derived(base: u64, coords: &[u64]) -> Self {
        Self::new(Self::derive_seed(base, coords))
    }

    /// Split off an independent generator. Advances `self`.
    pub fn fork(&mut self) -> Self {
        Self::new(self.inner.next_u64())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[-radius, radius)`.
    pub fn symmetric(&mut self, radius: f64) -> f64 {
        radius * (2.0 * self.unit() - 1.0)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
