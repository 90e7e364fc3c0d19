//! Seedable random streams.
//!
//! Every Monte-Carlo routine in the crate draws from a [`RandomStream`]. A stream
//! is identified by a `(seed, stream_id)` pair; two streams with the same pair
//! produce bit-identical sequences, and distinct stream ids select independent
//! ChaCha keystreams. Parallel code derives one sub-stream per task with
//! [`RandomStream::substream`] so results do not depend on thread scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{invalid, Result};

#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for task `index`. Does not advance `self`.
    pub fn substream(&self, index: u64) -> RandomStream {
        let id = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1)));
        RandomStream::new(self.seed, id)
    }

    /// Child stream keyed by the next draw of `self`.
    pub fn fork(&mut self) -> RandomStream {
        let key = self.rng.next_u64();
        RandomStream::new(self.seed, splitmix64(self.stream_id ^ key))
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// One draw from the chi-squared distribution with `k` degrees of freedom.
pub fn sample_chi_squared(k: u32, rng: &mut RandomStream) -> Result<f64> {
    Ok(chi_squared(k)?.sample(rng))
}

/// Chi-squared sampler for repeated draws (Gamma(k/2, scale 2) underneath).
pub fn chi_squared(k: u32) -> Result<ChiSquared<f64>> {
    if k == 0 {
        return Err(invalid("chi-squared degrees of freedom must be at least 1"));
    }
    ChiSquared::new(k as f64).map_err(|e| invalid(e.to_string()))
}
