//! Seed handling: one top-level seed fanned out into independent streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::norm;
use crate::scalar::Scalar;

/// Draws are generated and reduced in chunks of this many samples; chunk `c`
/// always uses stream `c` of the seeded generator, so the draw matrix does not
/// depend on how chunks are scheduled across threads.
pub const CHUNK_SIZE: usize = 4096;

/// Named sub-streams derived from a top-level seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedPurpose {
    Pairing = 1,
    Sweep = 2,
    Verification = 3,
    Covariance = 4,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn split_seed(seed: u64, purpose: SeedPurpose) -> u64 {
    mix64(seed ^ mix64((purpose as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

pub fn chunk_count(samples: usize) -> usize {
    samples.div_ceil(CHUNK_SIZE)
}

/// `count` directions uniform on the unit sphere in `d` dimensions.
pub fn sphere_directions<S: Scalar>(d: usize, count: usize, seed: u64) -> Vec<Vec<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<S> = (0..d).map(|_| S::standard_normal(&mut rng)).collect();
        let n = norm(&v);
        if n > S::zero() && n.is_finite() {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}
