//! Per-agent random streams keyed by `(seed, replication, agent)`.
//!
//! Each replication gets a ChaCha key derived from the seed, and each agent
//! a distinct stream under that key, so draws never depend on which thread
//! simulates which agent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, replication: u64, agent: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(replication.wrapping_add(0x5EED)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(agent);
    rng
}
