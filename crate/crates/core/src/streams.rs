//! Keyed random streams. A ChaCha cipher in counter mode gives every
//! (seed, domain, stream) triple its own reproducible generator, so callers
//! can re-open the stream for iteration `k` without replaying iterations
//! `0..k`. Domains keep unrelated users of the same seed decorrelated.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub(crate) const DOMAIN_SKETCH: u64 = 0x5345_4b43_4854_0001;
pub(crate) const DOMAIN_GALLERY: u64 = 0x4741_4c4c_4552_0002;
pub(crate) const DOMAIN_OBSERVATIONS: u64 = 0x4f42_5345_5256_0003;
pub(crate) const DOMAIN_PROBE: u64 = 0x5052_4f42_4556_0004;
pub(crate) const DOMAIN_RERUN: u64 = 0x5245_5255_4e53_0005;
pub(crate) const DOMAIN_EXPERIMENT: u64 = 0x4558_5045_5249_0006;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for stream `stream` under `(seed, domain)`. Distinct streams are
/// statistically independent; the same triple always yields the same values.
pub(crate) fn keyed_rng(seed: u64, domain: u64, stream: u64) -> ChaCha12Rng {
    let mut state = seed ^ domain.rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Folds extra identifiers into a derived seed, for nested stream families
/// (per-cell, per-replicate) that must not collide.
pub(crate) fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut state = seed;
    let mut out = splitmix64(&mut state);
    for &p in parts {
        state ^= p;
        out ^= splitmix64(&mut state).rotate_left(23);
    }
    out
}
