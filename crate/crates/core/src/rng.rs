//! Counter-style derivation of independent random streams from a master
//! seed.
//!
//! Every Monte Carlo trial in this crate draws from its own ChaCha stream
//! keyed by `(master_seed, purpose tag, cell tags..., trial index)`. Trials
//! can therefore run on any number of workers in any order and still
//! reproduce bit-identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purpose tags, one per Monte Carlo consumer.
pub mod tag {
    pub const SIM_TRIAL: u64 = 0x01;
    pub const CHI_TAIL: u64 = 0x02;
    pub const MGF_SCAN: u64 = 0x03;
    pub const ENSEMBLE_DRAW: u64 = 0x04;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 32-byte ChaCha key from the master seed and a tag sequence.
pub fn derive_key(master_seed: u64, tags: &[u64]) -> [u8; 32] {
    // Absorb the tag sequence, then squeeze four key words.
    let mut state = master_seed ^ 0xD1B5_4A32_D192_ED03;
    let mut acc = splitmix64(&mut state);
    for &t in tags {
        state ^= t;
        acc ^= splitmix64(&mut state);
    }
    state ^= acc;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Independent ChaCha stream for one `(purpose, cell, trial)` coordinate.
pub fn stream(master_seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_key(master_seed, tags))
}
