//! Laplace noise, stable hashing and seeded random streams.
//!
//! Every random decision in the pipeline is drawn from a [`SimRng`] derived
//! from a `u64` seed, so runs are reproducible across processes and worker
//! counts.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(FNV_OFFSET)
    }
}

impl Fnv1a {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn write_u32(&mut self, v: u32) {
        self.write(&v.to_le_bytes());
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a::default();
    h.write(bytes);
    h.finish()
}

/// Derives a purpose-specific seed (e.g. `"partition"`, `"structure"`) from a
/// run seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Fnv1a::default();
    h.write_u64(seed);
    h.write(label.as_bytes());
    h.finish()
}

/// One draw from Lap(scale) by inverse CDF.
///
/// A uniform is consumed even when `scale == 0` so that the number of draws
/// taken from `rng` does not depend on the privacy parameters.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    if scale == 0.0 {
        return 0.0;
    }
    let v = u - 0.5;
    -scale * v.signum() * (1.0 - 2.0 * v.abs()).ln()
}

/// Scale `sensitivity / eps` of the Laplace mechanism. `eps = +inf` yields a
/// zero scale (no noise).
pub fn laplace_scale(name: &'static str, sensitivity: f64, eps: f64) -> Result<f64> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::param(name, format!("epsilon must be positive, got {eps}")));
    }
    if !(sensitivity >= 0.0) {
        return Err(Error::param(name, format!("sensitivity must be nonnegative, got {sensitivity}")));
    }
    Ok(if eps.is_infinite() { 0.0 } else { sensitivity / eps })
}
