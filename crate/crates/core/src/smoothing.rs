//! Monte-Carlo log-sum-exp smoothing
//! `J_lse(u) = -λ log E[exp(-J(u + σ ε) / λ)]` and its score-function gradient.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mppi::mppi_weights;
use crate::problems::Problem;
use crate::random::{draw_perturbations, rng_from_seed};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LseConfig<T> {
    pub sigma_lse: T,
    pub lambda: T,
    pub n_samples: usize,
    pub seed: u64,
}

impl<T: Real> LseConfig<T> {
    pub fn new(sigma_lse: T, lambda: T, n_samples: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            sigma_lse,
            lambda,
            n_samples,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return invalid(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.sigma_lse >= T::zero()) || !self.sigma_lse.is_finite() {
            return invalid(format!("sigma_lse must be non-negative, got {}", self.sigma_lse));
        }
        if self.n_samples == 0 {
            return invalid("n_samples must be at least 1");
        }
        Ok(())
    }

    /// The perturbations used by [`lse_smooth`] and [`lse_gradient`].
    pub fn perturbations(&self, dim: usize) -> Vec<DVector<T>> {
        draw_perturbations(&mut rng_from_seed(self.seed), self.n_samples, dim)
    }
}

/// Evaluates `J(u + σ ε_j)` for every perturbation, in parallel, returning the
/// costs in perturbation order.
pub fn perturbed_costs<T, P>(cost: &P, u: &DVector<T>, sigma: T, eps: &[DVector<T>]) -> Vec<T>
where
    T: Real,
    P: Problem<T> + ?Sized,
{
    eps.par_iter().map(|e| cost.evaluate(&(u + e * sigma))).collect()
}

fn check_finite<T: Real>(costs: &[T]) -> Result<()> {
    match costs.iter().position(|c| !c.is_finite()) {
        Some(index) => Err(Error::NonFiniteCost { index }),
        None => Ok(()),
    }
}

/// `-λ log(mean(exp(-J_j / λ)))`, shifted by the minimum cost.
pub fn soft_min<T: Real>(costs: &[T], lambda: T) -> T {
    let m = costs.iter().copied().fold(T::infinity(), T::min);
    let mut acc = T::zero();
    for &c in costs {
        acc += (-(c - m) / lambda).exp();
    }
    m - lambda * (acc / T::from_usize_lossy(costs.len())).ln()
}

pub fn lse_smooth<T, P>(cost: &P, u: &DVector<T>, cfg: &LseConfig<T>) -> Result<T>
where
    T: Real,
    P: Problem<T> + ?Sized,
{
    cfg.validate()?;
    check_dim(cost, u)?;
    if cfg.sigma_lse == T::zero() {
        let j = cost.evaluate(u);
        check_finite(&[j])?;
        return Ok(j);
    }
    let eps = cfg.perturbations(u.len());
    let costs = perturbed_costs(cost, u, cfg.sigma_lse, &eps);
    check_finite(&costs)?;
    Ok(soft_min(&costs, cfg.lambda))
}

/// `-(λ/σ) Σ w_j ε_j` with softmax weights `w`; `u - (σ²/λ)·g` is the MPPI
/// update on the same perturbations.
pub fn lse_gradient<T, P>(cost: &P, u: &DVector<T>, cfg: &LseConfig<T>) -> Result<DVector<T>>
where
    T: Real,
    P: Problem<T> + ?Sized,
{
    cfg.validate()?;
    check_dim(cost, u)?;
    if cfg.sigma_lse == T::zero() {
        return invalid("the smoothed gradient needs sigma_lse > 0");
    }
    let eps = cfg.perturbations(u.len());
    let costs = perturbed_costs(cost, u, cfg.sigma_lse, &eps);
    check_finite(&costs)?;
    gradient_from_samples(&eps, &costs, cfg.sigma_lse, cfg.lambda)
}

/// Score-function gradient estimate from given perturbations and their costs.
pub fn gradient_from_samples<T: Real>(eps: &[DVector<T>], costs: &[T], sigma: T, lambda: T) -> Result<DVector<T>> {
    let w = mppi_weights(costs, lambda)?;
    let mut g = DVector::zeros(eps[0].len());
    for (wi, e) in w.iter().zip(eps) {
        g += e * *wi;
    }
    Ok(g * (-lambda / sigma))
}

fn check_dim<T: Real, P: Problem<T> + ?Sized>(cost: &P, u: &DVector<T>) -> Result<()> {
    if u.len() != cost.dim() {
        return invalid(format!(
            "control has dimension {}, problem expects {}",
            u.len(),
            cost.dim()
        ));
    }
    Ok(())
}
