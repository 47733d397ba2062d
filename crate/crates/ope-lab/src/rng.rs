//! Counter-based random-number substreams.
//!
//! Every sampling routine takes one root seed and derives an independent
//! ChaCha substream per trajectory (or per replication). Substreams make
//! parallel generation order-independent: trajectory `i` sees the same bits
//! whether it is drawn first, last, or concurrently.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// A keyed substream of the root generator.
pub fn substream(root_seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(root_seed);
    rng.set_stream(stream);
    rng
}

/// Mixes components into a single derived seed (splitmix64 chain).
///
/// Used to give each (sample-size, replication) sweep cell its own root seed
/// from the experiment seed.
pub fn mix(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= splitmix64(p.wrapping_add(h));
        h = splitmix64(h);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
