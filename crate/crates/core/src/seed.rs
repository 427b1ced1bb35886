//! Fixed seed derivation. Every stochastic stage draws from its own ChaCha
//! stream so that adding a stage never perturbs the others.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    rng_for(seed, stream).next_u64()
}

/// Stream tags for the pipeline stages.
pub(crate) mod stream {
    pub const RBM1: u64 = 1;
    pub const RBM2: u64 = 2;
    pub const FINETUNE: u64 = 3;
    pub const UBM: u64 = 4;
    pub const SPEAKER_BASE: u64 = 1000;
    pub const TRIAL_BASE: u64 = 1 << 32;
}
