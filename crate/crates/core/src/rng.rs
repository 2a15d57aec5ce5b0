//! Labeled RNG substreams.
//!
//! A single experiment seed fans out to independent ChaCha streams, one per
//! consumer. Adding a new consumer never changes the numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Emission,
    Routing,
    Settings,
    Outcomes,
    Repetitions,
    User,
    Noise,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Emission => 1,
            Stream::Routing => 2,
            Stream::Settings => 3,
            Stream::Outcomes => 4,
            Stream::Repetitions => 5,
            Stream::User => 6,
            Stream::Noise => 7,
        }
    }
}

/// Returns the generator for `stream` under `seed`.
pub fn substream(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Returns the generator for one repetition of a repeated experiment.
///
/// Repetition streams are keyed by `(stream, index)` so repetition `k` sees
/// the same numbers whatever the total repetition count.
pub fn repetition_substream(seed: u64, stream: Stream, index: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream.id() | (1 << 32));
    rng.set_word_pos(0);
    rng
}
