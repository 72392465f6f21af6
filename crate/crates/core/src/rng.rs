//! Counter-based random streams.
//!
//! A ChaCha20 key is derived from (seed, experiment id, grid index) through
//! SHA-256, and the trial index selects the ChaCha stream word. Every task
//! therefore owns its own stream and thread scheduling cannot change results.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha20Rng;

pub fn stream(seed: u64, experiment: &str, grid_index: u64) -> StreamRng {
    let mut h = Sha256::new();
    h.update(b"stcm-lab/rng/v1");
    h.update(seed.to_le_bytes());
    h.update((experiment.len() as u64).to_le_bytes());
    h.update(experiment.as_bytes());
    h.update(grid_index.to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha20Rng::from_seed(key)
}

pub fn trial_stream(seed: u64, experiment: &str, grid_index: u64, trial: u64) -> StreamRng {
    let mut rng = stream(seed, experiment, grid_index);
    rng.set_stream(trial);
    rng
}

/// Draw from CN(0, variance).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}
