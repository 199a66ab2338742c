//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a stream keyed by
//! `(seed, domain, index)`. Streams are independent of one another, so
//! sample `j` of a dataset or draw `d` of a Monte Carlo estimate is the
//! same no matter how many samples are generated or which thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Distinct domains never share key material.
pub mod domain {
    pub const CHANNEL: u64 = 1;
    pub const GAUSSIAN_NODES: u64 = 2;
    pub const NET_INIT: u64 = 3;
    pub const MC_DRAW: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const LABELS: u64 = 6;
    pub const MISC: u64 = 7;
}

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64, domain: u64, index: u64) -> Stream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derive a child seed, e.g. one per experiment cell.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    use rand::RngCore;
    stream(seed, domain::MISC, tag).next_u64()
}
