//! Counter-based seed splitting.
//!
//! Every random draw derives from a root seed and a stream id:
//! `ChaCha8(seed = root, stream = id)`. Streams never overlap, so per-probe
//! or per-fixture generators are reproducible regardless of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(root: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(id);
    rng
}

/// Stream id for a (purpose, index) pair.
pub fn stream_id(tag: u32, index: u32) -> u64 {
    ((tag as u64) << 32) | index as u64
}
