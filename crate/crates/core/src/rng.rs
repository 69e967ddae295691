//! Seeded random streams.
//!
//! Every experiment replica draws from its own ChaCha8 stream, keyed by the
//! experiment's base seed and the replica index. Streams never overlap, so a
//! replica produces the same numbers no matter how many other replicas run or
//! in which order they are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ReplicaRng = ChaCha8Rng;

/// Generator for replica `k` of an experiment seeded with `base_seed`.
pub fn replica_rng(base_seed: u64, replica: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(replica);
    rng
}
