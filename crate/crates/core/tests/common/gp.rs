//! Synthetic Gaussian-process data for calibration tests.

use global_mppi::kernels::{kernel_matrix, KernelSpec};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Draws 40 points in the unit square and targets from a zero-mean GP with a
/// Gaussian kernel of lengthscale `ls`.
pub fn synthetic_gp(seed: u64, ls: f64) -> (Vec<DVector<f64>>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<DVector<f64>> = (0..40)
        .map(|_| DVector::from_fn(2, |_, _| rng.random::<f64>()))
        .collect();
    let k = kernel_matrix(&KernelSpec::gaussian(ls).unwrap(), &points).unwrap() + DMatrix::identity(40, 40) * 1e-8;
    let l = Cholesky::new(k).unwrap().l();
    let z = DVector::from_fn(40, |_, _| rng.sample::<f64, _>(StandardNormal));
    (points, l * z)
}
