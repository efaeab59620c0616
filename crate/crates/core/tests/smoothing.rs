mod common;

use common::oracles::{gaussian_quadratic_lse, reweighted_fd_gradient};
use global_mppi::problems::{Bounds, FnProblem, Problem};
use global_mppi::smoothing::{lse_gradient, lse_smooth, perturbed_costs, LseConfig};
use nalgebra::DVector;

fn problem(d: usize, f: impl Fn(&DVector<f64>) -> f64 + Send + Sync) -> impl Problem<f64> {
    FnProblem::new("t", Bounds::uniform(d, -10.0, 10.0).unwrap(), f)
}

fn relative_error(g: &DVector<f64>, fd: &DVector<f64>) -> f64 {
    (g - fd).norm() / g.norm().max(fd.norm())
}

fn fd_check(p: &impl Problem<f64>, u: &DVector<f64>, cfg: &LseConfig<f64>) -> f64 {
    let g = lse_gradient(p, u, cfg).unwrap();
    let eps = cfg.perturbations(u.len());
    let costs = perturbed_costs(p, u, cfg.sigma_lse, &eps);
    let xs: Vec<DVector<f64>> = eps.iter().map(|e| u + e * cfg.sigma_lse).collect();
    let fd = reweighted_fd_gradient(u, &xs, &costs, cfg.sigma_lse, cfg.lambda, 1e-5);
    relative_error(&g, &fd)
}

#[test]
fn linear_cost_high_temperature() {
    let p = problem(1, |u| u[0]);
    let cfg = LseConfig::new(0.5, 1e3, 2000, 3).unwrap();
    assert!(fd_check(&p, &DVector::zeros(1), &cfg) < 1e-4);
}

#[test]
fn squared_norm() {
    let p = problem(2, |u| u.norm_squared());
    let cfg = LseConfig::new(0.1, 0.5, 10_000, 11).unwrap();
    assert!(fd_check(&p, &DVector::from_vec(vec![1.0, 0.0]), &cfg) < 1e-4);
}

#[test]
fn smoothed_value_at_the_reweighting_center() {
    let p = problem(2, |u| (2.0 * u[0]).sin() + u[1].powi(2));
    let u = DVector::from_vec(vec![0.3, -0.2]);
    let cfg = LseConfig::new(0.4, 0.3, 500, 5).unwrap();
    let eps = cfg.perturbations(2);
    let costs = perturbed_costs(&p, &u, cfg.sigma_lse, &eps);
    let xs: Vec<DVector<f64>> = eps.iter().map(|e| &u + e * cfg.sigma_lse).collect();
    let at_u = common::oracles::reweighted_soft_min(&u, &u, &xs, &costs, cfg.sigma_lse, cfg.lambda);
    assert!((at_u - lse_smooth(&p, &u, &cfg).unwrap()).abs() < 1e-12);
}

#[test]
fn gaussian_quadratic_closed_form() {
    let p = problem(1, |u| u[0] * u[0]);
    let u = DVector::zeros(1);
    for (sigma, lambda, seed) in [(1.0, 1.0, 1u64), (0.5, 1.0, 2), (1.0, 0.5, 3)] {
        let cfg = LseConfig::new(sigma, lambda, 100_000, seed).unwrap();
        let costs = perturbed_costs(&p, &u, sigma, &cfg.perturbations(1));
        let e: Vec<f64> = costs.iter().map(|j| (-j / lambda).exp()).collect();
        let n = e.len() as f64;
        let mean = e.iter().sum::<f64>() / n;
        let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = lambda * var.sqrt() / (mean * n.sqrt());
        let v = lse_smooth(&p, &u, &cfg).unwrap();
        let exact = gaussian_quadratic_lse(sigma, lambda, 1);
        assert!((v - exact).abs() < 3.0 * se, "{v} vs {exact} (se {se})");
    }
    assert!((gaussian_quadratic_lse(1.0, 1.0, 1) - 0.5 * 3f64.ln()).abs() < 1e-15);
}
