//! Reproducible random streams.
//!
//! Every stochastic routine takes an explicit `&mut StreamRng`. Streams are
//! ChaCha8 instances keyed by `(seed, stream id)`, so replication `r` of an
//! experiment draws from a sequence that does not depend on which worker runs
//! it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purposes within one replication. Each gets its own sub-stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Graph = 0,
    Primitives = 1,
    Treatment = 2,
    Propensity = 3,
    OutcomeTreated = 4,
    OutcomeControl = 5,
    Noise = 6,
    Misc = 7,
}

const PURPOSE_SLOTS: u64 = 16;

/// Stream for an arbitrary 64-bit stream id.
pub fn stream(seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream for `purpose` within replication `replication`.
pub fn replication_stream(seed: u64, replication: u64, purpose: Purpose) -> StreamRng {
    stream(seed, replication * PURPOSE_SLOTS + purpose as u64)
}

/// Stream for `purpose` within replication `replication`, further keyed by a
/// small variant index (e.g. the GNN depth), so that fits for different
/// variants of the same replication never share draws.
pub fn variant_stream(seed: u64, replication: u64, purpose: Purpose, variant: u64) -> StreamRng {
    let mut rng = replication_stream(seed, replication, purpose);
    // word position is a 68-bit counter; put variants far apart
    rng.set_word_pos((variant as u128) << 48);
    rng
}
