//! Seed derivation for independent, order-free random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with a list of stream coordinates (repeat, fold, ...).
///
/// Uses the splitmix64 finalizer so that neighbouring coordinates produce
/// unrelated seeds. Results depend only on the inputs, never on call order.
pub fn derive(base: u64, coords: &[u64]) -> u64 {
    let mut h = splitmix(base ^ 0x5151_7a7a_0f0f_3c3c);
    for &c in coords {
        h = splitmix(h ^ splitmix(c.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng(base: u64, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, coords))
}
