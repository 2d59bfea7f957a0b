//! Seed derivation.
//!
//! Every consumer of randomness owns a ChaCha8 stream identified by
//! `(seed, stream)`. Streams are fixed up front so that sequential and
//! parallel execution draw identical numbers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers used by the evaluation protocol.
pub mod streams {
    pub const SPLIT: u64 = 1;
    pub const FOLDS: u64 = 2;
    pub const GRID: u64 = 3;
    pub const MODEL: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
}

pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A child seed for sub-stream `stream` of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    stream_rng(seed, stream).next_u64()
}

/// Child seed for a two-level path such as (model stream, fold index).
pub fn derive_seed2(seed: u64, stream: u64, index: u64) -> u64 {
    derive_seed(derive_seed(seed, stream), index)
}
