//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream whose key is a
//! hash of `(seed, domain, a, b)` and whose stream id is `c`. A stream is
//! therefore addressed by coordinates rather than by how many numbers were
//! drawn before it, which keeps results independent of scheduling and of the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates the purposes random streams are used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    FactorInit = 1,
    Sweep = 2,
    ModeOrder = 3,
    Holdout = 4,
    SimFactors = 5,
    SimNoise = 6,
    Derive = 7,
}

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(h: u64, v: u64) -> u64 {
    splitmix64(h ^ splitmix64(v))
}

/// Opens the stream addressed by `(seed, domain, a, b, c)`.
pub fn stream(seed: u64, domain: Domain, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let mut h = mix(splitmix64(seed), domain as u64);
    h = mix(h, a);
    h = mix(h, b);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(c);
    rng
}

/// Derives a child seed, e.g. for restarts or per-cell benchmark runs.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(splitmix64(seed), Domain::Derive as u64), a), b)
}
