//! Seed handling. Every random stream in the crate is a `ChaCha8Rng` seeded
//! from a root seed and a path of stream identifiers, so results do not depend
//! on scheduling or worker count.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a stream identifier.
#[inline]
pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    splitmix64(parent ^ splitmix64(stream.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Derives a seed from a path of identifiers, e.g. `(network, rep, cell)`.
pub fn derive_path(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(root, |s, &id| derive_seed(s, id))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
