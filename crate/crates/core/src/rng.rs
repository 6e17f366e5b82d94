//! Named random sub-streams derived from a single run seed.
//!
//! Every consumer (`noise`, `init`, `shuffle`, ...) draws from its own
//! ChaCha stream keyed by `(seed, name, indices)`, so changing one stage
//! never perturbs the numbers another stage sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(seed: u64, name: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for b in name.bytes() {
        h = splitmix(h ^ b as u64);
    }
    for &i in indices {
        h = splitmix(h ^ i);
    }
    h
}

pub fn stream(seed: u64, name: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, name, indices))
}
