//! Random KernelSOS instances shared by the SDP test suites.

use global_mppi::kernels::{gram_matrix, KernelSpec};
use global_mppi::sdp::KsosSdpProblem;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub points: Vec<DVector<f64>>,
    pub problem: KsosSdpProblem<f64>,
}

/// A smooth random cost sampled at `n` uniform points in `[-1, 1]^d`.
pub fn random_instance(seed: u64, n: usize, gaussian: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..4);
    let points: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let center = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let freq = rng.random_range(1.0..4.0);
    let amp = rng.random_range(0.0..0.5);
    let offset = rng.random_range(-2.0..2.0);
    let costs = DVector::from_fn(n, |i, _| {
        (&points[i] - &center).norm_squared() + amp * (freq * points[i][0]).sin() + offset
    });
    let ls = rng.random_range(0.2..2.0);
    let spec = if gaussian {
        KernelSpec::gaussian(ls)
    } else {
        KernelSpec::laplace(ls)
    }
    .unwrap();
    let gram = gram_matrix(&spec, &points).unwrap();
    let problem = KsosSdpProblem::new(costs, gram, 1e-5).unwrap();
    Instance { points, problem }
}

/// The ten-point `(u - 0.3)²` grid instance on `[0, 1]`.
pub fn quadratic_grid_instance(mu: f64) -> Instance {
    let points: Vec<DVector<f64>> = (0..10).map(|i| DVector::from_element(1, i as f64 / 9.0)).collect();
    let costs = DVector::from_fn(10, |i, _| (points[i][0] - 0.3).powi(2));
    let gram = gram_matrix(&KernelSpec::laplace(0.5).unwrap(), &points).unwrap();
    let problem = KsosSdpProblem::new(costs, gram, mu).unwrap();
    Instance { points, problem }
}
