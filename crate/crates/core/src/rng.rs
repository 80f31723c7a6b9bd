//! Counter-based seeding.
//!
//! Every random draw is addressed by `(master_seed, stream)`: the ChaCha key
//! comes from the master seed and the stream id selects an independent
//! keystream, so a trajectory's samples do not depend on which worker runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Independent generator for work item `stream` under `master_seed`.
pub fn stream_rng(master_seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child seed from a master seed and a path of labels.
pub fn derive_seed(master_seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(mix(master_seed ^ 0x9e37_79b9_7f4a_7c15), |acc, &l| {
        mix(acc.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ mix(l))
    })
}
