//! Project PRNG: ChaCha8 streams derived from a single master seed.
//!
//! Every randomized stage of the pipeline receives its own child seed via
//! `derive_seed(master, role, index)`, so stages can be re-run in isolation
//! and reordering workers cannot change any result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Prng = ChaCha8Rng;

/// Child seed = SHA-256(master_le || role || index_le), truncated to 32 bytes.
pub fn derive_seed(master: u64, role: &str, index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(role.as_bytes());
    hasher.update(index.to_le_bytes());
    hasher.finalize().into()
}

pub fn rng_for(master: u64, role: &str, index: u64) -> Prng {
    Prng::from_seed(derive_seed(master, role, index))
}

/// Standard normal draw via Box-Muller.
pub fn normal(rng: &mut impl Rng) -> f64 {
    // u1 in (0,1] so the log is finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Normal draw with given mean and standard deviation.
pub fn normal_with(rng: &mut impl Rng, mean: f64, std: f64) -> f64 {
    mean + std * normal(rng)
}
