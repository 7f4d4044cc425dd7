//! Seed derivation for reproducible parallel streams.
//!
//! Every parallel block of work draws from its own generator seeded by
//! `derive_seed(master, stream, index)`, so the merged result does not depend
//! on how blocks are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Distinct tags keep the generators of different consumers
/// independent even when they share a master seed.
pub mod stream {
    pub const EMISSION: u64 = 0x01;
    pub const HBT_ROUTING: u64 = 0x02;
    pub const CALIBRATION: u64 = 0x03;
    pub const ALICE: u64 = 0x10;
    pub const BOB_BASIS: u64 = 0x11;
    pub const CHANNEL: u64 = 0x12;
    pub const DISCLOSURE: u64 = 0x13;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for block `index` of stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn block_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
