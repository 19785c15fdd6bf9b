//! Seeded random streams.
//!
//! Every run draws from one root seed. Each purpose gets its own ChaCha
//! stream so that, for example, turning off unlabeled data does not perturb
//! the order in which labeled batches are shuffled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags for the per-run substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    LabeledOrder = 2,
    UnlabeledOrder = 3,
    Augment = 4,
    Synth = 5,
    Split = 6,
    Test = 99,
}

pub fn substream(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Stream keyed by an extra index, e.g. one per generated clip.
pub fn indexed_substream(seed: u64, stream: Stream, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream as u64);
    rng
}
