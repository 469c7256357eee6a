//! Seed derivation.
//!
//! Every random stream in a run is derived from the single 64-bit master seed
//! as `mix(mix(mix(master ^ STREAM_TAG) ^ epoch) ^ node)` where `mix` is the
//! SplitMix64 finaliser. Streams are keyed by purpose, so consuming more or
//! fewer draws in one stream never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Chain = 0x43_48_41_49_4E,
    Arrivals = 0x41_52_52_49_56,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, epoch: u64, node: u64) -> u64 {
    mix(mix(mix(master ^ stream as u64) ^ epoch) ^ node)
}

pub fn stream_rng(master: u64, stream: Stream, epoch: u64, node: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, epoch, node))
}
