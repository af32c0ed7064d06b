//! Seed derivation.
//!
//! Every random draw in an experiment comes from a [`ChaCha8Rng`] whose seed is
//! derived from the single experiment seed. Derivation hashes the parent seed,
//! a purpose tag and an integer index through FNV-1a followed by the SplitMix64
//! finalizer:
//!
//! ```text
//! h = fnv1a64(tag) ^ splitmix64(parent) ^ splitmix64(index + 0x9E3779B97F4A7C15)
//! seed = splitmix64(h)
//! ```
//!
//! Tags in use: `split`, `init`, `train`, `gen`, `eval`, `dropout`, `lang:<code>`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Derive a child seed from `parent` for the purpose named by `tag`.
pub fn derive_seed(parent: u64, tag: &str, index: u64) -> u64 {
    let h = fnv1a64(tag.as_bytes())
        ^ splitmix64(parent)
        ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15));
    splitmix64(h)
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
