//! MPPI updates and the predictive-sampling baseline step.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problems::Problem;
use crate::random::{draw_perturbations, rng_from_seed};
use crate::scalar::Real;
use crate::smoothing::perturbed_costs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MppiConfig<T> {
    pub n_samples: usize,
    pub lambda: T,
    pub sigma: T,
    pub iterations: usize,
    pub seed: u64,
}

impl<T: Real> MppiConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.iterations == 0 {
            return invalid("n_samples and iterations must be at least 1");
        }
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return invalid(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return invalid(format!("sigma must be positive, got {}", self.sigma));
        }
        Ok(())
    }

    /// Step size that turns the smoothed-gradient step into the MPPI update.
    pub fn step_size(&self) -> T {
        self.sigma * self.sigma / self.lambda
    }
}

/// How the softmax temperature is chosen for a batch of costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "value")]
pub enum Temperature<T> {
    Fixed(T),
    /// `factor · median(J_i - min J)`.
    MedianScaled(T),
}

impl<T: Real> Default for Temperature<T> {
    fn default() -> Self {
        Temperature::MedianScaled(T::lit(0.1))
    }
}

impl<T: Copy> Temperature<T> {
    pub fn map<U>(self, f: impl Fn(T) -> U) -> Temperature<U> {
        match self {
            Temperature::Fixed(v) => Temperature::Fixed(f(v)),
            Temperature::MedianScaled(v) => Temperature::MedianScaled(f(v)),
        }
    }
}

impl<T: Real> Temperature<T> {
    pub fn validate(&self) -> Result<()> {
        let v = match self {
            Temperature::Fixed(v) | Temperature::MedianScaled(v) => *v,
        };
        if !(v > T::zero()) || !v.is_finite() {
            return invalid(format!("temperature parameter must be positive, got {v}"));
        }
        Ok(())
    }

    /// Resolves the temperature for a batch; non-finite costs are ignored.
    pub fn resolve(&self, costs: &[T]) -> T {
        match *self {
            Temperature::Fixed(l) => l,
            Temperature::MedianScaled(f) => {
                let mut finite: Vec<T> = costs.iter().copied().filter(|c| c.is_finite()).collect();
                let floor = T::lit(1e-12);
                if finite.is_empty() {
                    return floor;
                }
                let m = finite.iter().copied().fold(T::infinity(), T::min);
                finite.iter_mut().for_each(|c| *c -= m);
                finite.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                let k = finite.len();
                let med = if k % 2 == 1 {
                    finite[k / 2]
                } else {
                    (finite[k / 2 - 1] + finite[k / 2]) * T::lit(0.5)
                };
                (f * med).max(floor)
            }
        }
    }
}

/// Softmax weights `exp(-J_i/λ) / Σ exp(-J_j/λ)`. Non-finite costs get
/// weight zero; at least one cost must be finite.
pub fn mppi_weights<T: Real>(costs: &[T], lambda: T) -> Result<DVector<T>> {
    let m = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(T::infinity(), T::min);
    if !m.is_finite() {
        return Err(Error::NumericalFailure("every sampled cost is non-finite".into()));
    }
    let mut w = DVector::from_iterator(
        costs.len(),
        costs.iter().map(|&c| {
            if c.is_finite() {
                (-(c - m) / lambda).exp()
            } else {
                T::zero()
            }
        }),
    );
    let total = w.sum();
    w /= total;
    Ok(w)
}

/// `Σ w_i (u + σ ε_i)` for given perturbations and their costs, not clipped.
pub fn mppi_update<T: Real>(
    u: &DVector<T>,
    eps: &[DVector<T>],
    costs: &[T],
    sigma: T,
    lambda: T,
) -> Result<DVector<T>> {
    let w = mppi_weights(costs, lambda)?;
    let mut out = DVector::zeros(u.len());
    for (wi, e) in w.iter().zip(eps) {
        if *wi > T::zero() {
            out += (u + e * sigma) * *wi;
        }
    }
    Ok(out)
}

fn check<T: Real, P: Problem<T> + ?Sized>(cost: &P, u: &DVector<T>, cfg: &MppiConfig<T>) -> Result<()> {
    cfg.validate()?;
    if u.len() != cost.dim() {
        return invalid(format!(
            "control has dimension {}, problem expects {}",
            u.len(),
            cost.dim()
        ));
    }
    Ok(())
}

/// One MPPI update around `u`, clipped to the problem bounds.
pub fn mppi_step<T, P, R>(cost: &P, u: &DVector<T>, cfg: &MppiConfig<T>, rng: &mut R) -> Result<DVector<T>>
where
    T: Real,
    P: Problem<T> + ?Sized,
    R: Rng + ?Sized,
{
    mppi_step_with(cost, u, cfg, &Temperature::Fixed(cfg.lambda), rng)
}

/// [`mppi_step`] with the temperature resolved from each batch of costs.
pub fn mppi_step_with<T, P, R>(
    cost: &P,
    u: &DVector<T>,
    cfg: &MppiConfig<T>,
    temperature: &Temperature<T>,
    rng: &mut R,
) -> Result<DVector<T>>
where
    T: Real,
    P: Problem<T> + ?Sized,
    R: Rng + ?Sized,
{
    check(cost, u, cfg)?;
    let eps = draw_perturbations(rng, cfg.n_samples, u.len());
    let costs = perturbed_costs(cost, u, cfg.sigma, &eps);
    let lambda = temperature.resolve(&costs);
    let next = mppi_update(u, &eps, &costs, cfg.sigma, lambda)?;
    Ok(cost.bounds().clip(&next))
}

#[derive(Debug, Clone)]
pub struct RefineOutcome<T: Real> {
    /// Lowest-cost iterate, including the initial one.
    pub u: DVector<T>,
    pub cost: T,
    pub initial_cost: T,
    /// Every call to the cost function, rollouts and nominal checks.
    pub evaluations: u64,
}

/// Runs `cfg.iterations` MPPI steps from `u_init` and returns the best
/// iterate by nominal cost.
pub fn mppi_refine<T, P>(cost: &P, u_init: &DVector<T>, cfg: &MppiConfig<T>) -> Result<RefineOutcome<T>>
where
    T: Real,
    P: Problem<T> + ?Sized,
{
    mppi_refine_with(cost, u_init, cfg, &Temperature::Fixed(cfg.lambda))
}

/// [`mppi_refine`] using [`mppi_step_with`].
pub fn mppi_refine_with<T, P>(
    cost: &P,
    u_init: &DVector<T>,
    cfg: &MppiConfig<T>,
    temperature: &Temperature<T>,
) -> Result<RefineOutcome<T>>
where
    T: Real,
    P: Problem<T> + ?Sized,
{
    check(cost, u_init, cfg)?;
    temperature.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let initial_cost = cost.evaluate(u_init);
    let mut best = (u_init.clone(), initial_cost);
    let mut u = u_init.clone();
    let mut evaluations = 1;
    for _ in 0..cfg.iterations {
        u = mppi_step_with(cost, &u, cfg, temperature, &mut rng)?;
        let j = cost.evaluate(&u);
        evaluations += cfg.n_samples as u64 + 1;
        if j < best.1 || !best.1.is_finite() && j.is_finite() {
            best = (u.clone(), j);
        }
    }
    Ok(RefineOutcome {
        u: best.0,
        cost: best.1,
        initial_cost,
        evaluations,
    })
}

/// Elite-1 step: the best of `n_samples` clipped perturbations of `u` if it
/// strictly beats `nominal_cost`, otherwise `u`.
pub fn predictive_sampling_step<T, P, R>(
    cost: &P,
    u: &DVector<T>,
    nominal_cost: T,
    cfg: &MppiConfig<T>,
    rng: &mut R,
) -> Result<(DVector<T>, T)>
where
    T: Real,
    P: Problem<T> + ?Sized,
    R: Rng + ?Sized,
{
    check(cost, u, cfg)?;
    let eps = draw_perturbations(rng, cfg.n_samples, u.len());
    let candidates: Vec<DVector<T>> = eps.iter().map(|e| cost.bounds().clip(&(u + e * cfg.sigma))).collect();
    let costs: Vec<T> = candidates.par_iter().map(|c| cost.evaluate(c)).collect();
    if costs.iter().all(|c| !c.is_finite()) {
        return Err(Error::NumericalFailure("every sampled cost is non-finite".into()));
    }
    let mut best = (u.clone(), nominal_cost);
    for (c, j) in candidates.into_iter().zip(costs) {
        if j.is_finite() && (j < best.1 || !best.1.is_finite()) {
            best = (c, j);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Bounds, FnProblem};
    use crate::smoothing::{lse_gradient, LseConfig};

    fn problem(d: usize, f: impl Fn(&DVector<f64>) -> f64 + Send + Sync) -> impl Problem<f64> {
        FnProblem::new("t", Bounds::uniform(d, -5.0, 5.0).unwrap(), f)
    }

    #[test]
    fn weight_examples() {
        let w = mppi_weights(&[3.0f64; 4], 0.7).unwrap();
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let lambda = 0.37;
        let w = mppi_weights(&[0.0, lambda * 2f64.ln()], lambda).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12 && (w[1] - 1.0 / 3.0).abs() < 1e-12);
        let shifted = mppi_weights(&[1000.0, 1000.0 + lambda * 2f64.ln()], lambda).unwrap();
        assert!((shifted - w).amax() < 1e-12);
        let w = mppi_weights(&[f64::INFINITY, 1.0, f64::NAN], 1.0).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 1.0, 0.0]);
        assert!(mppi_weights(&[f64::INFINITY], 1.0).is_err());
    }

    #[test]
    fn matches_gradient_step() {
        let p = problem(3, |u| (2.0 * u[0]).sin() + u[1] * u[2] + u.norm_squared());
        let u = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let cfg = MppiConfig {
            n_samples: 64,
            lambda: 0.2,
            sigma: 0.3,
            iterations: 1,
            seed: 5,
        };
        let lse = LseConfig::new(cfg.sigma, cfg.lambda, cfg.n_samples, cfg.seed).unwrap();
        let eps = lse.perturbations(3);
        let costs = perturbed_costs(&p, &u, cfg.sigma, &eps);
        let mppi = mppi_update(&u, &eps, &costs, cfg.sigma, cfg.lambda).unwrap();
        let sgd = &u - lse_gradient(&p, &u, &lse).unwrap() * cfg.step_size();
        assert!((mppi - sgd).amax() < 1e-12);
    }

    #[test]
    fn constant_cost_averages_perturbations() {
        let p = problem(2, |_| 1.0);
        let u = DVector::from_vec(vec![0.1, 0.2]);
        let cfg = MppiConfig {
            n_samples: 16,
            lambda: 1.0,
            sigma: 0.5,
            iterations: 1,
            seed: 3,
        };
        let next = mppi_step(&p, &u, &cfg, &mut rng_from_seed(3)).unwrap();
        let eps: Vec<DVector<f64>> = draw_perturbations(&mut rng_from_seed(3), 16, 2);
        let mean = eps.iter().fold(DVector::zeros(2), |a, e| a + (&u + e * 0.5) / 16.0);
        assert!((next - mean).amax() < 1e-15);
    }

    #[test]
    fn refine_never_worse() {
        let p = problem(2, |u| u.norm_squared());
        let cfg = MppiConfig {
            n_samples: 32,
            lambda: 0.1,
            sigma: 0.3,
            iterations: 5,
            seed: 0,
        };
        let out = mppi_refine(&p, &DVector::zeros(2), &cfg).unwrap();
        assert_eq!(out.cost, 0.0);
        assert_eq!(out.evaluations, 1 + 5 * 33);
    }

    #[test]
    fn predictive_sampling_keeps_nominal_on_ties() {
        let p = problem(2, |_| 2.0);
        let cfg = MppiConfig {
            n_samples: 32,
            lambda: 0.1,
            sigma: 0.3,
            iterations: 1,
            seed: 0,
        };
        let u = DVector::from_vec(vec![0.5, 0.5]);
        let (v, j) = predictive_sampling_step(&p, &u, 2.0, &cfg, &mut rng_from_seed(1)).unwrap();
        assert_eq!(v, u);
        assert_eq!(j, 2.0);
        let p = problem(1, |u| -u[0].abs());
        let (v, _) = predictive_sampling_step(&p, &DVector::zeros(1), 0.0, &cfg, &mut rng_from_seed(1)).unwrap();
        assert_ne!(v[0], 0.0);
    }

    #[test]
    fn median_temperature() {
        let t = Temperature::MedianScaled(0.1);
        assert!((t.resolve(&[5.0, 6.0, 9.0, f64::INFINITY]) - 0.1).abs() < 1e-15);
        assert_eq!(t.resolve(&[2.0, 2.0]), 1e-12);
        assert_eq!(Temperature::Fixed(0.3).resolve(&[1.0]), 0.3);
    }
}
