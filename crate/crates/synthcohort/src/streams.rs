//! Stable derivation of independent RNG sub-streams from a master seed.
//!
//! Every entity (patient, glass, direction vector, tile) draws from its own
//! seeded stream, so enlarging a cohort or toggling unrelated features never
//! reshuffles existing entities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed from a master seed, a purpose tag and an index.
pub fn substream_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix(master ^ 0x5851_F42D_4C95_7F2D);
    for &b in tag.as_bytes() {
        h = mix(h ^ u64::from(b));
    }
    mix(h ^ index)
}

/// A ChaCha stream for the given (master, tag, index) triple.
pub fn substream_rng(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(master, tag, index))
}
