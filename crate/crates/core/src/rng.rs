//! Seeded, stream-separated randomness.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! run seed and a stream id derived from task labels, so results do not depend
//! on evaluation order.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a label sequence.
pub fn hash_labels(labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |h, &l| mix64(h ^ mix64(l)))
}

/// Stable label for a string tag.
pub fn tag(s: &str) -> u64 {
    s.bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01B3))
}

pub fn stream(seed: u64, labels: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(hash_labels(labels));
    rng
}

pub fn gaussian_vector(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| StandardNormal.sample(rng))
}

pub fn fill_gaussian(buf: &mut [f64], rng: &mut ChaCha8Rng) {
    for v in buf {
        *v = StandardNormal.sample(rng);
    }
}

/// Standard normal vector for `(seed, stream)`; identical on replay.
pub fn sample_gaussian(dim: usize, seed: u64, stream_index: u64) -> DVector<f64> {
    gaussian_vector(dim, &mut stream(seed, &[tag("sample_gaussian"), stream_index]))
}
