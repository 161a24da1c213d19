mod common;

use common::oracles::{planted_problem, sphere_grid_min, PLANTED_CASES};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sphereqp::linalg::{kron, vec_of, SymmetricMatrix};
use sphereqp::random::{random_matrix, random_symmetric, random_vector, rng};
use sphereqp::scqp::{solve, solve_inequality, solve_matrix, Multiplicity, ScqpOptions, ScqpProblem};

fn problem(q: DMatrix<f64>, b: DVector<f64>) -> ScqpProblem {
    ScqpProblem::new(SymmetricMatrix::new(q).unwrap(), b).unwrap()
}

fn diag(q: &[f64], b: &[f64]) -> ScqpProblem {
    ScqpProblem::new(SymmetricMatrix::from_diagonal(q), DVector::from_column_slice(b)).unwrap()
}

#[test]
fn global_optimality_against_grid_oracle() {
    let mut r = rng(21);
    let opts = ScqpOptions::default();
    for i in 0..48 {
        let k = 2 + i % 2;
        let case = PLANTED_CASES[(i / 2) % PLANTED_CASES.len()];
        let (q, b) = planted_problem(&mut r, k, case);
        let p = problem(q.clone(), b.clone());
        let sol = solve(&p, &opts).unwrap();
        let (oracle, _) = sphere_grid_min(&q, &b);
        assert!(sol.objective <= oracle + 1e-8, "case {case:?} k={k}: {} vs {}", sol.objective, oracle);
        let kkt = p.kkt_residual(&sol.x, sol.multiplier);
        assert!(kkt < 1e-8 * (q.norm() + b.norm()), "kkt {kkt}");
        for alt in &sol.alternates {
            assert!((p.objective(alt) - sol.objective).abs() < 1e-12);
        }
    }
}

#[test]
fn planted_zero_coefficient_gives_exact_zero() {
    let sol = solve(&diag(&[-2.0, 0.5, 1.0, 3.0], &[0.7, 0.0, -0.4, 0.2]), &ScqpOptions::default()).unwrap();
    assert_eq!(sol.x[1], 0.0);
    assert_eq!(sol.multiplicity, Multiplicity::Unique);
}

#[test]
fn zero_leading_coefficient_branches() {
    // d = Σ c²/(s−1)² = 0.25 ≤ 1: two minimizers of equal value.
    let p = diag(&[-1.0, 1.0, 2.0], &[0.0, 0.5, 0.5]);
    let sol = solve(&p, &ScqpOptions::default()).unwrap();
    assert_eq!(sol.multiplicity, Multiplicity::SignPair);
    let alt = &sol.alternates[0];
    assert!((p.objective(alt) - sol.objective).abs() < 1e-12);
    assert!(sol.x[0] > 0.0 && alt[0] < 0.0);

    // d > 1: the component on the smallest eigenvalue vanishes.
    let p = diag(&[-1.0, 1.0, 2.0], &[0.0, 5.0, 5.0]);
    let sol = solve(&p, &ScqpOptions::default()).unwrap();
    assert_eq!(sol.multiplicity, Multiplicity::Unique);
    assert_eq!(sol.x[0], 0.0);
    assert!(sol.multiplier < -1.0);

    // Two-dimensional free group: a family of minimizers.
    let p = diag(&[-1.0, -1.0, 2.0], &[0.0, 0.0, 0.3]);
    let sol = solve(&p, &ScqpOptions::default()).unwrap();
    assert_eq!(sol.multiplicity, Multiplicity::SphereFamily);
    assert!(p.kkt_residual(&sol.x, sol.multiplier) < 1e-12);
}

#[test]
fn boundary_of_hard_case_is_unique() {
    // c = e₂ with s₂ − 1 = 1 gives d = 1 exactly.
    let p = diag(&[0.0, 1.0], &[0.0, 1.0]);
    let sol = solve(&p, &ScqpOptions::default()).unwrap();
    assert_eq!(sol.multiplicity, Multiplicity::Unique);
    assert!((sol.x - DVector::from_vec(vec![0.0, -1.0])).norm() < 1e-12);
}

#[test]
fn sphere_version_of_example_two() {
    let sol = solve(&diag(&[-1.0, 1.0], &[0.0, 1.8]), &ScqpOptions::default()).unwrap();
    assert_eq!(sol.multiplicity, Multiplicity::SignPair);
    assert!((sol.x[0] - 0.19f64.sqrt()).abs() < 1e-12 && (sol.x[1] + 0.9).abs() < 1e-12);
}

#[test]
fn inequality_matches_ball_oracle() {
    let mut r = rng(22);
    let opts = ScqpOptions::default();
    for i in 0..40 {
        let (q, b) = planted_problem(&mut r, 2, PLANTED_CASES[i % PLANTED_CASES.len()]);
        let p = problem(q.clone(), b.clone());
        let sol = solve_inequality(&p, &opts).unwrap();
        assert!(sol.x.norm() <= 1.0 + 1e-12);
        let (mut oracle, _) = sphere_grid_min(&q, &b);
        if let Some(ch) = q.clone().cholesky() {
            let x = -ch.solve(&b);
            if x.norm() <= 1.0 {
                oracle = oracle.min(p.objective(&x));
            }
        }
        assert!(sol.objective <= oracle + 1e-8, "{} vs {}", sol.objective, oracle);
    }
}

#[test]
fn matrix_variant_matches_vectorized_problem() {
    let mut r = rng(23);
    let opts = ScqpOptions::default();
    for _ in 0..10 {
        let q = random_symmetric(&mut r, 3);
        let b = random_matrix(&mut r, 3, 2);
        let sol = solve_matrix(&q, &b, &opts).unwrap();
        assert!((sol.x.norm() - 1.0).abs() < 1e-12);
        let big = kron(&DMatrix::identity(2, 2), q.as_matrix());
        let vec_sol = solve(&problem(big, vec_of(&b)), &opts).unwrap();
        assert!((sol.objective - vec_sol.objective).abs() < 1e-8);
    }
    let q = random_symmetric(&mut r, 4);
    let b = random_vector(&mut r, 4);
    let single = solve_matrix(&q, &DMatrix::from_column_slice(4, 1, b.as_slice()), &opts).unwrap();
    let vector = solve(&ScqpProblem::new(q, b).unwrap(), &opts).unwrap();
    assert!((single.x.column(0) - vector.x).norm() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scale_covariance(seed in 0u64..10_000, k in 2usize..8, alpha in 0.01f64..100.0) {
        let mut r = rng(seed);
        let q = random_symmetric(&mut r, k);
        let b = random_vector(&mut r, k);
        let opts = ScqpOptions::default();
        let a = solve(&ScqpProblem::new(q.clone(), b.clone()).unwrap(), &opts).unwrap();
        let s = solve(&ScqpProblem::new(q.scaled(alpha), b * alpha).unwrap(), &opts).unwrap();
        prop_assert!((a.x - s.x).norm() < 1e-7);
    }

    #[test]
    fn kkt_and_norm_on_all_paths(seed in 0u64..10_000, k in 2usize..6, case in 0usize..4) {
        let mut r = rng(seed);
        let (q, b) = planted_problem(&mut r, k, PLANTED_CASES[case]);
        let p = problem(q.clone(), b.clone());
        let sol = solve(&p, &ScqpOptions::default()).unwrap();
        prop_assert!((sol.x.norm() - 1.0).abs() < 1e-10);
        prop_assert!(p.kkt_residual(&sol.x, sol.multiplier) <= 1e-8 * (q.norm() + b.norm()));
    }
}
