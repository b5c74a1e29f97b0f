//! Seeded random streams.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded from a 64-bit
//! value. Standard normals use the Marsaglia polar method: draw `u, v` uniform
//! on `(-1, 1)` from the top 53 bits of a `u64`, reject unless
//! `0 < s = u² + v² < 1`, and emit the pair `u·√(−2 ln s / s)`,
//! `v·√(−2 ln s / s)`. Both members of the pair are used, in that order.
//!
//! Per-replicate seeds are derived with [`derive_seed`], a SplitMix64-style mix
//! of `(master, index, stream)`, so replicates can run in any order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags for [`derive_seed`].
pub mod stream {
    pub const NULL_FIELD: u64 = 1;
    pub const ALT_FIELD: u64 = 2;
    pub const ANCHOR: u64 = 3;
    pub const COVER_TRIALS: u64 = 4;
    pub const PERMUTATION: u64 = 5;
    pub const CALIBRATION: u64 = 6;
    pub const BENCH: u64 = 7;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a replicate index and a stream tag.
pub fn derive_seed(master: u64, index: u64, stream: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    splitmix64(b ^ stream.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7))
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal variates via the polar method.
pub struct NormalStream<R> {
    rng: R,
    spare: Option<f64>,
}

impl NormalStream<ChaCha8Rng> {
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seeded(seed))
    }
}

impl<R: RngCore> NormalStream<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    #[inline]
    fn symmetric_unit(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        (bits as f64) * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = self.symmetric_unit();
            let v = self.symmetric_unit();
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let k = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * k);
                return u * k;
            }
        }
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.next_normal();
        }
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

/// Uniform integer in `[0, upper)`.
pub fn uniform_index<R: Rng>(rng: &mut R, upper: usize) -> usize {
    rng.random_range(0..upper)
}
