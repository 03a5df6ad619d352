//! Seed derivation and counter-based substreams.
//!
//! Every random draw in the crate flows from a single 64-bit seed. Child
//! seeds are pure functions of `(parent, index)`, so replication `r` sees the
//! same stream no matter which worker runs it. Within one trajectory the
//! latent draws and the per-index draws use separate ChaCha streams keyed by
//! the same seed; values are consumed in index order, which makes the first
//! `N` values identical for every horizon `>= N`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed number `index` of `parent`.
#[inline]
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix64(mix64(parent ^ GOLDEN).wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Independent stream identifiers within one trajectory seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Latent = 0,
    Values = 1,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
