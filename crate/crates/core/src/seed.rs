//! Deterministic seed derivation.
//!
//! Every Monte Carlo repetition, sweep point and noise stream gets its own
//! seed computed from its parent seed and an index, so results never depend
//! on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed number `index` of `parent`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix(mix(parent ^ 0x6a09_e667_f3bc_c909).wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Labels for the independent random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Junction1 = 1,
    Junction2 = 2,
    FluxNoise = 3,
}

pub fn stream_rng(run_seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(run_seed, stream as u64))
}
