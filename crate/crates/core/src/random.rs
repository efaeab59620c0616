//! Seeded random streams.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a stream index into a master seed (splitmix64 finalizer), so that
/// per-sample streams do not depend on evaluation order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` standard normal vectors of dimension `d`, drawn row by row.
pub fn draw_perturbations<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> Vec<DVector<T>> {
    (0..n)
        .map(|_| DVector::from_fn(d, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal))))
        .collect()
}
