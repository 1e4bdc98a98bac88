mod common;

use common::{rng, vector, EdgeInstance};
use cvxreg_core::constraint_residual;
use cvxreg_core::local_qcqp::{
    assemble_edge_problem, dual_derivatives, dual_value, solve_edge, solve_edge_from,
    EdgeProblem, DEFAULT_MAX_NEWTON_ITERS, DEFAULT_NEWTON_TOL,
};
use cvxreg_core::{FunctionClass, Smoothness};
use rand::Rng;

const TOL: f64 = DEFAULT_NEWTON_TOL;

fn direct_objective(inst: &EdgeInstance, xi: &[f64]) -> f64 {
    let node = 1 + inst.d;
    let mut total = 0.0;
    for (k, (z, lambda)) in [(&inst.z_i, &inst.lambda_i), (&inst.z_j, &inst.lambda_j)]
        .into_iter()
        .enumerate()
    {
        let eta = &xi[k * node..(k + 1) * node];
        total += (inst.y[k] - eta[0]).powi(2) / (2.0 * inst.n as f64);
        let s: f64 = (0..node).map(|t| (eta[t] - z[t] + lambda[t]).powi(2)).sum();
        total += 0.5 * inst.rho * s;
    }
    total
}

#[test]
fn standard_form_objective_matches_direct_evaluation() {
    let mut r = rng(1);
    for d in [1, 1, 1, 2, 5] {
        for _ in 0..50 {
            let inst = EdgeInstance::random(&mut r, d);
            let prob = inst.problem();
            let xi = vector(&mut r, 2 * (1 + d), 2.0);
            assert!((prob.objective(&xi) - direct_objective(&inst, &xi)).abs() <= 1e-10);
        }
    }
}

#[test]
fn standard_form_constraint_is_negated_residual() {
    let mut r = rng(2);
    for d in [1, 2, 5] {
        for _ in 0..100 {
            let inst = EdgeInstance::random(&mut r, d);
            let prob = inst.problem();
            let xi = vector(&mut r, 2 * (1 + d), 2.0);
            let node = 1 + d;
            let residual = constraint_residual(
                &inst.x_i,
                xi[0],
                &xi[1..node],
                &inst.x_j,
                xi[node],
                &xi[node + 1..],
                &inst.class,
            )
            .unwrap();
            assert!((prob.constraint(&xi) + residual).abs() <= 1e-10 * (1.0 + residual.abs()));
        }
    }
}

#[test]
fn nonsmooth_class_gives_affine_constraint() {
    let mut inst = EdgeInstance::random(&mut rng(3), 2);
    inst.class = FunctionClass::convex();
    let prob = inst.problem();
    assert!(prob.p1.iter().all(|v| *v == 0.0));
}

#[test]
fn invalid_rho_is_rejected() {
    let inst = EdgeInstance::random(&mut rng(4), 1);
    assert!(assemble_edge_problem(&inst.data(), 0.0, inst.n, &inst.class).is_err());
    assert!(assemble_edge_problem(&inst.data(), -1.0, inst.n, &inst.class).is_err());
}

#[test]
fn affine_dual_when_constraint_is_constant() {
    let mut prob = EdgeInstance::random(&mut rng(5), 1).problem();
    prob.p1.iter_mut().for_each(|v| *v = 0.0);
    prob.q1.iter_mut().for_each(|v| *v = 0.0);
    let (g, h) = dual_derivatives(3.0, &prob).unwrap();
    assert_eq!(g, prob.r1);
    assert_eq!(h, 0.0);
}

#[test]
fn dual_is_concave_on_samples() {
    let mut r = rng(6);
    for d in [1, 2, 5] {
        let prob = EdgeInstance::random(&mut r, d).problem();
        for _ in 0..100 {
            let a = r.random_range(0.0..20.0);
            let b = r.random_range(0.0..20.0);
            let mid = dual_value(0.5 * (a + b), &prob).unwrap();
            let chord = 0.5 * (dual_value(a, &prob).unwrap() + dual_value(b, &prob).unwrap());
            assert!(mid >= chord - 1e-12 * (1.0 + chord.abs()));
        }
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let mut r = rng(7);
    for d in [1, 2, 5] {
        for _ in 0..30 {
            let prob = EdgeInstance::random(&mut r, d).problem();
            let nu = 0.7;
            let (g, h) = dual_derivatives(nu, &prob).unwrap();
            let step = 1e-5;
            let fd = (dual_value(nu + step, &prob).unwrap() - dual_value(nu - step, &prob).unwrap())
                / (2.0 * step);
            assert!((fd - g).abs() <= 1e-5 * g.abs().max(1.0), "grad {g} vs {fd}");
            let step = 1e-4;
            let fd2 = (dual_value(nu + step, &prob).unwrap() - 2.0 * dual_value(nu, &prob).unwrap()
                + dual_value(nu - step, &prob).unwrap())
                / (step * step);
            assert!((fd2 - h).abs() <= 1e-4 * h.abs().max(1.0), "hess {h} vs {fd2}");
        }
    }
}

/// Consensus pulls the gradients apart so that the smoothness part of the constraint binds.
fn active_instance() -> EdgeProblem {
    let mut inst = EdgeInstance::random(&mut rng(8), 1);
    inst.class = FunctionClass::new(1.0, Smoothness::Finite(5.0)).unwrap();
    inst.rho = 0.5;
    inst.n = 10;
    inst.x_i = vec![-0.5];
    inst.x_j = vec![0.5];
    inst.y = [0.25, 0.25];
    inst.z_i = vec![0.25, 3.0];
    inst.z_j = vec![0.25, -3.0];
    inst.lambda_i = vec![0.0, 0.0];
    inst.lambda_j = vec![0.0, 0.0];
    inst.problem()
}

#[test]
fn active_multiplier_matches_grid_search() {
    let prob = active_instance();
    assert!(dual_derivatives(0.0, &prob).unwrap().0 > 0.0);
    let sol = solve_edge(&prob, TOL, DEFAULT_MAX_NEWTON_ITERS).unwrap();
    let points = 1_000_000;
    let (mut best_nu, mut best) = (0.0, f64::NEG_INFINITY);
    for k in 0..=points {
        let nu = 100.0 * k as f64 / points as f64;
        let v = dual_value(nu, &prob).unwrap();
        if v > best {
            best = v;
            best_nu = nu;
        }
    }
    assert!(sol.nu > 0.0 && sol.nu < 100.0);
    assert!((sol.nu - best_nu).abs() <= 1e-4, "{} vs {}", sol.nu, best_nu);
}

#[test]
fn inactive_constraint_returns_unconstrained_minimizer() {
    let mut inst = EdgeInstance::random(&mut rng(9), 1);
    inst.class = FunctionClass::new(1.0, Smoothness::Finite(5.0)).unwrap();
    // consensus at exact samples of x^2, which is interpolable
    inst.x_i = vec![-0.5];
    inst.x_j = vec![0.5];
    inst.y = [0.25, 0.25];
    inst.z_i = vec![0.25, -1.0];
    inst.z_j = vec![0.25, 1.0];
    inst.lambda_i = vec![0.0, 0.0];
    inst.lambda_j = vec![0.0, 0.0];
    let prob = inst.problem();
    let sol = solve_edge(&prob, TOL, DEFAULT_MAX_NEWTON_ITERS).unwrap();
    assert_eq!(sol.nu, 0.0);
    assert_eq!(sol.iterations, 0);
    let expected: Vec<f64> = (0..prob.dim).map(|k| -0.5 * prob.q0[k] / prob.p0[k * prob.dim + k]).collect();
    for (a, b) in sol.xi.iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-15);
    }
}

#[test]
fn random_instances_are_feasible_optimal_and_slack_complementary() {
    let mut r = rng(10);
    let mut active = 0;
    for k in 0..1000 {
        let d = [1, 2, 5][k % 3];
        let prob = EdgeInstance::random(&mut r, d).problem();
        let sol = solve_edge(&prob, TOL, DEFAULT_MAX_NEWTON_ITERS).unwrap();
        let constraint = prob.constraint(&sol.xi);
        assert!(sol.nu >= 0.0);
        assert!(constraint <= TOL, "instance {k}: constraint {constraint}");
        let gap = prob.objective(&sol.xi) - dual_value(sol.nu, &prob).unwrap();
        assert!(gap.abs() <= 10.0 * TOL, "instance {k}: gap {gap}");
        assert!((sol.nu * constraint).abs() <= 10.0 * TOL);
        active += usize::from(sol.nu > 0.0);
    }
    // the sample must exercise both branches
    assert!(active > 100 && active < 900, "{active} active");
}

#[test]
fn solution_does_not_depend_on_newton_start() {
    let mut r = rng(11);
    for k in 0..200 {
        let prob = EdgeInstance::random(&mut r, [1, 2, 5][k % 3]).problem();
        let base = solve_edge_from(&prob, 0.0, TOL, DEFAULT_MAX_NEWTON_ITERS).unwrap();
        for nu0 in [1.0, 10.0] {
            let other = solve_edge_from(&prob, nu0, TOL, DEFAULT_MAX_NEWTON_ITERS).unwrap();
            for (a, b) in base.xi.iter().zip(&other.xi) {
                assert!((a - b).abs() <= 1e-8, "instance {k} from {nu0}");
            }
        }
    }
    let prob = active_instance();
    let a = solve_edge_from(&prob, 0.0, TOL, DEFAULT_MAX_NEWTON_ITERS).unwrap();
    let b = solve_edge_from(&prob, 10.0, TOL, DEFAULT_MAX_NEWTON_ITERS).unwrap();
    assert!(a.xi.iter().zip(&b.xi).all(|(u, v)| (u - v).abs() <= 1e-8));
}
