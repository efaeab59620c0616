mod common;

use common::instances::{quadratic_grid_instance, random_instance};
use common::reference_sdp::solve_reference;
use global_mppi::sdp::{check_kkt, solve_ksos, KsosSdpProblem, SdpStatus, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use nalgebra::DVector;
use proptest::prelude::*;

fn solve(p: &KsosSdpProblem<f64>) -> global_mppi::sdp::KsosSolution<f64> {
    solve_ksos(p, DEFAULT_MAX_ITERS, DEFAULT_TOL).unwrap()
}

#[test]
fn quadratic_grid_matches_reference() {
    let inst = quadratic_grid_instance(1e-5);
    let p = &inst.problem;
    let s = solve(p);
    assert_eq!(s.status, SdpStatus::Optimal);
    let min = p.costs.min();
    assert!(s.c <= min && s.c >= min - 0.05, "c = {}", s.c);
    let kkt = check_kkt(p, &s);
    assert!(kkt.primal_residual < 1e-6 && kkt.dual_residual < 1e-6);
    assert!(kkt.gap < 1e-6);

    let reference = solve_reference(&p.costs, &p.gram.r, p.mu);
    assert!((reference.c - s.c).abs() < 1e-5, "{} vs {}", reference.c, s.c);
    assert!((reference.dual_objective - s.dual_weights.dot(&p.costs)).abs() < 1e-5);
}

#[test]
fn agrees_with_reference_on_small_instances() {
    for seed in 0..20u64 {
        let n = [5, 8, 12, 15][seed as usize % 4];
        let inst = random_instance(1000 + seed, n, seed % 2 == 0);
        let s = solve(&inst.problem);
        assert_eq!(s.status, SdpStatus::Optimal);
        let reference = solve_reference(&inst.problem.costs, &inst.problem.gram.r, inst.problem.mu);
        assert!(
            (reference.c - s.c).abs() < 1e-5,
            "seed {seed}: {} vs {}",
            reference.c,
            s.c
        );
    }
}

#[test]
fn lower_bound_over_random_instances() {
    for seed in 0..120u64 {
        let n = [5, 20][seed as usize % 2];
        let inst = random_instance(seed, n, seed % 3 == 0);
        let p = &inst.problem;
        let s = solve(p);
        assert_eq!(s.status, SdpStatus::Optimal, "seed {seed}");
        assert!(s.max_residual() < 1e-6, "seed {seed}");
        assert!(s.c <= p.costs.min() + 1e-6, "seed {seed}");
        let min_eig = nalgebra::SymmetricEigen::new(s.b.clone()).eigenvalues.min();
        assert!(min_eig >= -1e-8);
        assert!((s.dual_weights.sum() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn weak_duality_along_the_path() {
    for seed in 0..30u64 {
        let inst = random_instance(500 + seed, 20, seed % 2 == 1);
        let s = solve(&inst.problem);
        for rec in &s.history {
            assert!(rec.dual_objective >= rec.primal_objective - 1e-6);
        }
    }
}

#[test]
fn larger_instance_converges() {
    let inst = random_instance(77, 80, false);
    let s = solve(&inst.problem);
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!(s.c <= inst.problem.costs.min() + 1e-6);
}

fn with_costs(p: &KsosSdpProblem<f64>, costs: DVector<f64>) -> KsosSdpProblem<f64> {
    KsosSdpProblem::new(costs, p.gram.clone(), p.mu).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scaling_costs_scales_c(seed in 0u64..10_000, scale in 0.1f64..20.0) {
        let inst = random_instance(seed, 12, seed % 2 == 0);
        let p = &inst.problem;
        let base = solve(p);
        let s = solve(&with_costs(p, &p.costs * scale));
        let magnitude = scale * p.costs.amax();
        prop_assert!((s.c - scale * base.c).abs() <= 1e-6 * magnitude);
    }

    #[test]
    fn shifting_costs_shifts_c(seed in 0u64..10_000, shift in -50.0f64..50.0) {
        let inst = random_instance(seed, 12, seed % 2 == 1);
        let p = &inst.problem;
        let base = solve(p);
        let s = solve(&with_costs(p, p.costs.add_scalar(shift)));
        prop_assert!((s.c - (base.c + shift)).abs() < 1e-6);
    }
}
