//! Deterministic random-stream derivation.
//!
//! All stochastic code in this crate draws from ChaCha streams derived from a
//! single master seed plus a path of integer salts. Two distinct salt paths
//! yield statistically independent streams, so parallel workers can each be
//! handed their own stream without any coordination, and a run is reproducible
//! from the master seed alone.
//!
//! Derivation scheme: the master seed and the salts are folded into a 64-bit
//! state with the SplitMix64 finalizer (one application per salt, plus one for
//! the path length), and the resulting state is expanded by four further
//! SplitMix64 steps into the 256-bit ChaCha key.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The concrete generator type every derived stream uses.
pub type SeededRng = ChaCha12Rng;

/// Salt namespaces for the independent stream families used in the crate.
pub mod salt {
    /// Per-sample noise-parameter and realization draws in dataset generation.
    pub const DATASET_SAMPLE: u64 = 0x01;
    /// Shuffling for the stratified train/validation/test split.
    pub const SPLIT: u64 = 0x02;
    /// Network weight initialization.
    pub const MLP_INIT: u64 = 0x03;
    /// Mini-batch shuffling, salted further by epoch.
    pub const MLP_SHUFFLE: u64 = 0x04;
    /// Finite-measurement Bernoulli draws.
    pub const FINITE_M: u64 = 0x05;
    /// Monte-Carlo validation draws.
    pub const MONTE_CARLO: u64 = 0x06;
}

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer: a bijective 64-bit mixer with good avalanche.
#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent ChaCha stream from a master seed and a salt path.
///
/// The path is hierarchical: `derive_rng(seed, &[salt::DATASET_SAMPLE, class, index])`
/// gives every sample of every class its own stream.
pub fn derive_rng(master: u64, salts: &[u64]) -> ChaCha12Rng {
    let mut state = master;
    for &s in salts {
        let mut mixer = state ^ s.wrapping_mul(GAMMA | 1);
        state = splitmix64(&mut mixer);
    }
    let mut mixer = state ^ (salts.len() as u64).wrapping_mul(GAMMA | 1);
    state = splitmix64(&mut mixer);

    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
