//! Synthetic benchmark landscapes and the problem registry.
//!
//! | name                | dim | box       | minimum                     |
//! |---------------------|-----|-----------|-----------------------------|
//! | `multimodal-1d`     | 1   | [-3, 3]   | grid oracle near `u = 2.6`  |
//! | `rastrigin-2d`      | 2   | [-3, 3]²  | 0 at `(0.7, -0.4)`          |
//! | `sparse-contact`    | 1   | [-3, 3]   | 0 at `u = 2.4`, plateau 1   |
//! | `pusht-quasistatic` | 12  | [-1, 1]¹² | unknown                     |
//! | `quadratic-1d`      | 1   | [-2, 2]   | 0 at `u = 0.7`              |
//! | `constant-cost`     | 1   | [-1, 1]   | 3 everywhere                |

use nalgebra::DVector;

use super::pusher::{PushTProblem, PushTScenario};
use super::{Bounds, FnProblem, Problem};
use crate::scalar::Real;

/// Grid argmin (step `1e-4` over `[-3, 3]`) of [`multimodal_1d`].
pub const MULTIMODAL_1D_ARGMIN: f64 = 2.6;
/// Value of [`multimodal_1d`] at [`MULTIMODAL_1D_ARGMIN`].
pub const MULTIMODAL_1D_MIN: f64 = -4.182417361486834e-5;

pub const RASTRIGIN_OFFSET: [f64; 2] = [0.7, -0.4];
/// Radius of the ball around the global minimizer inside its basin.
pub const RASTRIGIN_BASIN_RADIUS: f64 = 0.5;

pub const SPARSE_CONTACT_CENTER: f64 = 2.4;
pub const SPARSE_CONTACT_WIDTH: f64 = 0.6;
pub const SPARSE_CONTACT_PLATEAU: f64 = 1.0;

pub const QUADRATIC_1D_ARGMIN: f64 = 0.7;
pub const CONSTANT_COST: f64 = 3.0;

/// `1 - 0.5 exp(-u²/(2·0.6²)) - exp(-(u - 2.6)²/(2·0.1²))`: a wide shallow
/// basin around the box center and a narrow deep well near the upper bound.
pub fn multimodal_1d<T: Real>(u: T) -> T {
    let wide = (-(u * u) / T::lit(2.0 * 0.6 * 0.6)).exp();
    let d = u - T::lit(2.6);
    let narrow = (-(d * d) / T::lit(2.0 * 0.1 * 0.1)).exp();
    T::one() - T::lit(0.5) * wide - narrow
}

/// Rastrigin function shifted to [`RASTRIGIN_OFFSET`].
pub fn rastrigin_2d<T: Real>(u: &DVector<T>) -> T {
    let mut acc = T::lit(20.0);
    for (i, &off) in RASTRIGIN_OFFSET.iter().enumerate() {
        let x = u[i] - T::lit(off);
        acc += x * x - T::lit(10.0) * (T::two_pi() * x).cos();
    }
    acc
}

/// `min(1, ((u - 2.4) / 0.6)²)`: exactly 1 on `[-3, 1.8]`, which is 80% of
/// the box.
pub fn sparse_contact<T: Real>(u: T) -> T {
    let x = (u - T::lit(SPARSE_CONTACT_CENTER)) / T::lit(SPARSE_CONTACT_WIDTH);
    (x * x).min(T::lit(SPARSE_CONTACT_PLATEAU))
}

/// Known minimum of a registered problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOptimum {
    pub value: f64,
    pub argmin: Vec<f64>,
}

pub fn reference_optimum(name: &str) -> Option<ReferenceOptimum> {
    let (value, argmin) = match name {
        "multimodal-1d" => (MULTIMODAL_1D_MIN, vec![MULTIMODAL_1D_ARGMIN]),
        "rastrigin-2d" => (0.0, RASTRIGIN_OFFSET.to_vec()),
        "sparse-contact" => (0.0, vec![SPARSE_CONTACT_CENTER]),
        "quadratic-1d" => (0.0, vec![QUADRATIC_1D_ARGMIN]),
        "constant-cost" => (CONSTANT_COST, vec![0.0]),
        _ => return None,
    };
    Some(ReferenceOptimum { value, argmin })
}

const NAMES: [&str; 6] = [
    "multimodal-1d",
    "rastrigin-2d",
    "sparse-contact",
    "pusht-quasistatic",
    "quadratic-1d",
    "constant-cost",
];

/// Registered problem names in a stable order.
pub fn problem_names() -> &'static [&'static str] {
    &NAMES
}

fn boxed<F>(name: &str, dim: usize, lo: f64, hi: f64, f: F) -> Box<dyn Problem<f64>>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
{
    Box::new(FnProblem::new(
        name,
        Bounds::uniform(dim, lo, hi).expect("valid box"),
        f,
    ))
}

pub fn problem_by_name(name: &str) -> Option<Box<dyn Problem<f64>>> {
    let p = match name {
        "multimodal-1d" => boxed(name, 1, -3.0, 3.0, |u| multimodal_1d(u[0])),
        "rastrigin-2d" => boxed(name, 2, -3.0, 3.0, rastrigin_2d),
        "sparse-contact" => boxed(name, 1, -3.0, 3.0, |u| sparse_contact(u[0])),
        "pusht-quasistatic" => Box::new(PushTProblem::new(PushTScenario::default_scenario())),
        "quadratic-1d" => boxed(name, 1, -2.0, 2.0, |u| (u[0] - QUADRATIC_1D_ARGMIN).powi(2)),
        "constant-cost" => boxed(name, 1, -1.0, 1.0, |_| CONSTANT_COST),
        _ => return None,
    };
    Some(p)
}

/// Every registered problem, in [`problem_names`] order.
pub fn benchmark_suite() -> Vec<Box<dyn Problem<f64>>> {
    NAMES.iter().map(|n| problem_by_name(n).expect("registered")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multimodal_grid_oracle() {
        let (mut best, mut arg) = (f64::INFINITY, 0.0);
        for i in 0..=60_000 {
            let u = -3.0 + i as f64 * 1e-4;
            let v = multimodal_1d(u);
            if v < best {
                best = v;
                arg = u;
            }
        }
        assert!((arg - MULTIMODAL_1D_ARGMIN).abs() < 1e-9);
        assert!((best - MULTIMODAL_1D_MIN).abs() < 1e-9);
        assert!((multimodal_1d(MULTIMODAL_1D_ARGMIN) - MULTIMODAL_1D_MIN).abs() < 1e-9);
        // The initial nominal sits in the shallow basin.
        assert!((multimodal_1d(0.0f64) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rastrigin_minimum() {
        let at = DVector::from_vec(RASTRIGIN_OFFSET.to_vec());
        assert!(rastrigin_2d(&at).abs() < 1e-12);
        let off = DVector::from_vec(vec![RASTRIGIN_OFFSET[0] + 1.0, RASTRIGIN_OFFSET[1]]);
        assert!(rastrigin_2d(&off) > 0.9);
    }

    #[test]
    fn sparse_contact_plateau() {
        for i in 0..=480 {
            let u = -3.0 + i as f64 * 0.01;
            assert_eq!(sparse_contact(u), SPARSE_CONTACT_PLATEAU);
        }
        assert_eq!(sparse_contact(SPARSE_CONTACT_CENTER), 0.0);
        // Flat measure: [-3, 1.8] inside a box of width 6.
        let flat = (0..=60_000)
            .filter(|i| sparse_contact(-3.0 + *i as f64 * 1e-4) == SPARSE_CONTACT_PLATEAU)
            .count();
        assert!((flat as f64 / 60_001.0 - 0.8).abs() < 1e-3);
    }

    #[test]
    fn registry_is_stable_and_complete() {
        let names: Vec<String> = benchmark_suite().iter().map(|p| p.name().to_owned()).collect();
        assert_eq!(names, NAMES);
        assert!(problem_by_name("nope").is_none());
        assert_eq!(problem_by_name("pusht-quasistatic").unwrap().dim(), 12);
        for name in NAMES {
            let p = problem_by_name(name).unwrap();
            let v = p.evaluate(&p.initial());
            assert!(v.is_finite());
            if let Some(opt) = reference_optimum(name) {
                let at = p.evaluate(&DVector::from_vec(opt.argmin.clone()));
                assert!((at - opt.value).abs() < 1e-9, "{name}");
            }
        }
    }
}
