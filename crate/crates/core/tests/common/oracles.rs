//! Independent reference computations for the smoothing estimators.

use nalgebra::DVector;

/// Soft-min over fixed sample points `x_j = u + σ ε_j` drawn around `u`,
/// re-targeted to a nearby center `v` by likelihood-ratio weights
/// `N(x_j; v, σ²) / N(x_j; u, σ²)`. At `v = u` it equals the plain estimate,
/// so its finite differences in `v` give the score-function gradient.
pub fn reweighted_soft_min(
    u: &DVector<f64>,
    v: &DVector<f64>,
    xs: &[DVector<f64>],
    costs: &[f64],
    sigma: f64,
    lambda: f64,
) -> f64 {
    let logs: Vec<f64> = xs
        .iter()
        .zip(costs)
        .map(|(x, j)| -((x - v).norm_squared() - (x - u).norm_squared()) / (2.0 * sigma * sigma) - j / lambda)
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs.iter().map(|l| (l - m).exp()).sum();
    -lambda * (m + (s / xs.len() as f64).ln())
}

/// Central differences of [`reweighted_soft_min`] at `v = u`.
pub fn reweighted_fd_gradient(
    u: &DVector<f64>,
    xs: &[DVector<f64>],
    costs: &[f64],
    sigma: f64,
    lambda: f64,
    h: f64,
) -> DVector<f64> {
    DVector::from_fn(u.len(), |k, _| {
        let mut plus = u.clone();
        let mut minus = u.clone();
        plus[k] += h;
        minus[k] -= h;
        (reweighted_soft_min(u, &plus, xs, costs, sigma, lambda)
            - reweighted_soft_min(u, &minus, xs, costs, sigma, lambda))
            / (2.0 * h)
    })
}

/// `-λ log E[exp(-(σε)ᵀ(σε) / λ)]` for `ε ~ N(0, I_d)`.
pub fn gaussian_quadratic_lse(sigma: f64, lambda: f64, d: usize) -> f64 {
    0.5 * lambda * d as f64 * (1.0 + 2.0 * sigma * sigma / lambda).ln()
}
