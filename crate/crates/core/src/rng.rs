//! Independent random streams derived from one master seed.
//!
//! Each consumer of randomness draws from its own ChaCha stream, so enabling
//! dropout (say) never shifts the parameter initialization or the folds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Folds,
    Holdout,
    Init,
    Dropout,
    Noise,
    PcGrad,
    Discovery,
    Synthetic,
    Batches,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Folds => 1,
            Stream::Holdout => 2,
            Stream::Init => 3,
            Stream::Dropout => 4,
            Stream::Noise => 5,
            Stream::PcGrad => 6,
            Stream::Discovery => 7,
            Stream::Synthetic => 8,
            Stream::Batches => 9,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Stream further split by an index (for example one per fold).
pub fn indexed_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mixed = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    stream_rng(mixed, stream)
}
