//! Deterministic seed derivation.
//!
//! Every stochastic step in the platform draws from a ChaCha8 generator whose
//! seed is derived from a master seed, a stream tag and an index. Serial and
//! parallel runs therefore consume identical random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type StudyRng = ChaCha8Rng;

/// Name recorded alongside seeds so a session can be replayed.
pub const RNG_NAME: &str = "chacha8";

pub mod stream {
    pub const ASSIGNMENT: u64 = 0x01;
    pub const POLICY_STEP: u64 = 0x02;
    pub const SURVEY: u64 = 0x03;
    pub const EXIT_CODE: u64 = 0x04;
    pub const PARTICIPANT: u64 = 0x10;
    pub const USER_REWARD: u64 = 0x11;
    pub const USER_SURVEY: u64 = 0x12;
    pub const DATASET: u64 = 0x20;
    pub const PERMUTATION: u64 = 0x30;
    pub const BOOTSTRAP: u64 = 0x31;
    pub const REGISTRATION: u64 = 0x40;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `(master, stream, index)` into a fresh 64-bit seed.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ stream.rotate_left(17));
    splitmix64(b ^ index.rotate_left(41))
}

pub fn rng_from(seed: u64) -> StudyRng {
    StudyRng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, stream: u64, index: u64) -> StudyRng {
    rng_from(derive_seed(master, stream, index))
}
