mod common;

use std::time::Instant;

use common::oracle::l1_linf_vertex_oracle;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ted_core::l1::{lasso_cd, lasso_kkt_violation, solve_clime, solve_l1_linf, L1LinfProblem, SolveStatus};

fn random_problem(rng: &mut ChaCha8Rng) -> L1LinfProblem {
    let p = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=8);
    let a = Array2::from_shape_fn((m, p), |_| rng.gen_range(-1.0..1.0));
    let lambda = 10f64.powf(rng.gen_range(-3.0..0.0));
    // Targets near the range of A, so that both feasible and infeasible
    // instances occur when m > p.
    let x0 = Array1::from_shape_fn(p, |_| rng.gen_range(-1.0..1.0));
    let b = a.dot(&x0) + Array1::from_shape_fn(m, |_| lambda * rng.gen_range(-2.0..2.0));
    L1LinfProblem::new(a, b, lambda)
}

/// Max residual of `Aβ − b`, written out entry by entry.
fn fresh_residual(a: &Array2<f64>, beta: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        let mut s = 0.0;
        for j in 0..a.ncols() {
            s += a[[i, j]] * beta[j];
        }
        worst = worst.max((s - b[i]).abs());
    }
    worst
}

#[test]
fn two_hundred_instances_match_vertex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let start = Instant::now();
    let (mut infeasible, mut checked) = (0, 0);
    for k in 0..200 {
        let prob = random_problem(&mut rng);
        let sol = solve_l1_linf(&prob).unwrap();
        match l1_linf_vertex_oracle(&prob.a, &prob.b, prob.lambda) {
            Some((obj, _)) => {
                assert_eq!(sol.status, SolveStatus::Optimal, "instance {k}");
                assert!((sol.objective - obj).abs() <= 1e-6, "instance {k}: {} vs oracle {obj}", sol.objective);
                assert!(fresh_residual(&prob.a, &sol.beta, &prob.b) <= prob.lambda + 1e-8, "instance {k}");
                checked += 1;
            }
            None => {
                assert_eq!(sol.status, SolveStatus::Infeasible, "instance {k}");
                infeasible += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(checked >= 100, "only {checked} feasible instances ({infeasible} infeasible)");
    assert!(secs < 10.0, "took {secs:.2}s");
}

#[test]
fn zero_vector_when_lambda_covers_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut prob = random_problem(&mut rng);
        prob.lambda = prob.b.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        let sol = solve_l1_linf(&prob).unwrap();
        assert!(sol.beta.iter().all(|v| *v == 0.0));
        assert_eq!(sol.objective, 0.0);
    }
}

#[test]
fn identity_design_shrinks_toward_boundary() {
    let prob = L1LinfProblem::new(Array2::eye(3), Array1::from(vec![2.0, 0.0, 0.0]), 0.5);
    let sol = solve_l1_linf(&prob).unwrap();
    assert!((sol.beta[0] - 1.5).abs() < 1e-12);
    assert_eq!(sol.beta[1], 0.0);
    assert_eq!(sol.beta[2], 0.0);
}

#[test]
fn clime_random_well_conditioned_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = Array2::from_shape_fn((3, 3), |_| rng.gen_range(-0.3..0.3));
    let ahat = g.t().dot(&g) + Array2::<f64>::eye(3);
    let omega = solve_clime(ahat.view(), 0.0).unwrap();
    let prod = omega.dot(&ahat);
    for i in 0..3 {
        for j in 0..3 {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((prod[[i, j]] - e).abs() < 1e-6);
        }
    }
}

#[test]
fn lasso_orthonormal_closed_form() {
    // Columns of a scaled Hadamard matrix are orthonormal.
    let h = ndarray::array![[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];
    let x = h.slice(ndarray::s![.., 0..3]).mapv(|v| v / 2.0);
    let y = Array1::from(vec![1.3, -0.4, 0.8, 0.2]);
    let lambda = 0.6;
    let beta = lasso_cd(x.view(), y.view(), lambda).unwrap();
    let xty = x.t().dot(&y);
    for j in 0..3 {
        let z: f64 = xty[j];
        let st = z.signum() * (z.abs() - lambda / 2.0).max(0.0);
        assert!((beta[j] - st).abs() < 1e-8, "coordinate {j}: {} vs {st}", beta[j]);
    }
}

#[test]
fn lasso_zero_above_kkt_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Array2<f64> = Array2::from_shape_fn((30, 5), |_| rng.gen_range(-1.0..1.0));
    let y = Array1::from_shape_fn(30, |_| rng.gen_range(-1.0..1.0));
    let bound = 2.0 * x.t().dot(&y).iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    let beta = lasso_cd(x.view(), y.view(), bound).unwrap();
    assert!(beta.iter().all(|v| *v == 0.0));
}

fn problem_strategy() -> impl Strategy<Value = (Array2<f64>, Array1<f64>)> {
    (1usize..=5, 1usize..=8).prop_flat_map(|(p, m)| {
        (proptest::collection::vec(-1.0f64..1.0, m * p), proptest::collection::vec(-1.0f64..1.0, m)).prop_map(
            move |(a, b)| (Array2::from_shape_vec((m, p), a).unwrap(), Array1::from(b)),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_nonincreasing_in_lambda((a, b) in problem_strategy(), l0 in 0.01f64..0.5) {
        let mut last = f64::INFINITY;
        for k in 0..5 {
            let lambda = l0 * (1.0 + k as f64);
            let sol = solve_l1_linf(&L1LinfProblem::new(a.clone(), b.clone(), lambda)).unwrap();
            if sol.status == SolveStatus::Optimal {
                prop_assert!(sol.objective <= last + 1e-9);
                last = sol.objective;
            } else {
                prop_assert!(last.is_infinite());
            }
        }
    }

    #[test]
    fn scaling_target_and_lambda_scales_solution((a, b) in problem_strategy(), lambda in 0.05f64..0.8, c in 0.1f64..10.0) {
        let s1 = solve_l1_linf(&L1LinfProblem::new(a.clone(), b.clone(), lambda)).unwrap();
        let s2 = solve_l1_linf(&L1LinfProblem::new(a.clone(), &b * c, lambda * c)).unwrap();
        prop_assert_eq!(s1.status, s2.status);
        if s1.status == SolveStatus::Optimal {
            // The optimum need not be unique; the objective and feasibility scale exactly.
            prop_assert!((s2.objective - c * s1.objective).abs() <= 1e-8 * (1.0 + c * s1.objective));
            prop_assert!(fresh_residual(&a, &(&s1.beta * c), &(&b * c)) <= c * lambda + 1e-8 * c.max(1.0));
        }
    }

    #[test]
    fn optimal_solutions_pass_fresh_feasibility_check((a, b) in problem_strategy(), lambda in 0.0f64..1.0) {
        let sol = solve_l1_linf(&L1LinfProblem::new(a.clone(), b.clone(), lambda)).unwrap();
        if sol.status == SolveStatus::Optimal {
            prop_assert!(fresh_residual(&a, &sol.beta, &b) <= lambda + 1e-8);
            let obj: f64 = sol.beta.iter().map(|v| v.abs()).sum();
            prop_assert!((obj - sol.objective).abs() < 1e-12);
        }
    }

    #[test]
    fn lasso_satisfies_kkt((a, b) in problem_strategy(), lambda in 0.001f64..2.0) {
        let beta = lasso_cd(a.view(), b.view(), lambda).unwrap();
        prop_assert!(lasso_kkt_violation(a.view(), b.view(), beta.view(), lambda) <= 1e-6);
        let g = a.t().dot(&(&b - &a.dot(&beta))) * 2.0;
        for j in 0..beta.len() {
            if beta[j] == 0.0 {
                prop_assert!(g[j].abs() <= lambda + 1e-6);
            } else {
                prop_assert!((g[j] - lambda * beta[j].signum()).abs() <= 1e-6);
            }
        }
    }
}
