mod common;

use common::oracles::{discriminant_data, fisher_ratio, gevd_smallest_sum};
use nalgebra::DMatrix;
use sphereqp::cgevd::{
    a_problem, assemble_x, b_rs, g_system, orthonormalize, q_a, solve, stack_g, update_a, update_g, CgevdOptions,
    CgevdProblem, CgevdState,
};
use sphereqp::linalg::{cholesky, kron, solve_lower, sym_evd, vec_of};
use sphereqp::random::{random_matrix, random_orthonormal, random_spd, rng, SeededRng};
use sphereqp::SymmetricMatrix;

fn random_problem(r: &mut SeededRng, i: usize, j: usize, rr: usize, s: usize) -> CgevdProblem {
    let n = i * j;
    let f = random_matrix(r, n, n);
    let q = SymmetricMatrix::new(f.transpose() * f).unwrap();
    let b = random_spd(r, n);
    CgevdProblem::new(q, b, i, j, rr, s).unwrap()
}

fn random_factors(r: &mut SeededRng, i: usize, j: usize, rr: usize, s: usize) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
    let g = (0..rr).map(|_| random_matrix(r, i, s)).collect();
    (g, random_matrix(r, j, s))
}

fn state_for(p: &CgevdProblem, a: &DMatrix<f64>) -> CgevdState {
    let (g, _) = update_g(p, a, None).unwrap();
    let x = assemble_x(&g, a);
    CgevdState {
        objective: p.objective(&x),
        feasibility: p.feasibility(&x),
        g,
        a: a.clone(),
    }
}

#[test]
fn assembled_columns_are_vectorized_products() {
    let mut r = rng(1);
    for (i, j, rr, s) in [(3, 4, 2, 2), (5, 2, 3, 1), (2, 6, 1, 2)] {
        let (g, a) = random_factors(&mut r, i, j, rr, s);
        let x = assemble_x(&g, &a);
        for (col, gr) in g.iter().enumerate() {
            let direct = vec_of(&(gr * a.transpose()));
            assert!((x.column(col) - direct).amax() < 1e-12);
        }
        let eye = DMatrix::identity(j, j);
        let blocks: Vec<DMatrix<f64>> = g.iter().map(|gr| kron(&eye, gr)).collect();
        let va = vec_of(&a.transpose());
        for (col, blk) in blocks.iter().enumerate() {
            assert!((x.column(col) - blk * &va).amax() < 1e-12);
        }
    }
}

#[test]
fn identity_factor_gives_vectorized_cores() {
    let mut r = rng(2);
    let (g, _) = random_factors(&mut r, 3, 3, 2, 3);
    let x = assemble_x(&g, &DMatrix::identity(3, 3));
    assert!((x - stack_g(&g)).amax() < 1e-15);
}

#[test]
fn orthonormalizing_a_leaves_x_unchanged() {
    let mut r = rng(3);
    let (g, a) = random_factors(&mut r, 4, 5, 3, 2);
    let (q, g2) = orthonormalize(&a, &g);
    assert!((q.transpose() * &q - DMatrix::identity(2, 2)).amax() < 1e-12);
    assert!((assemble_x(&g, &a) - assemble_x(&g2, &q)).amax() < 1e-10);
}

#[test]
fn objective_and_constraint_identities() {
    let mut r = rng(4);
    for _ in 0..5 {
        let p = random_problem(&mut r, 3, 4, 3, 2);
        let (g, a) = random_factors(&mut r, 3, 4, 3, 2);
        let x = assemble_x(&g, &a);
        let va = vec_of(&a.transpose());
        let qa = q_a(&p, &g);
        let direct = p.objective(&x);
        assert!((va.dot(&(&qa * &va)) - direct).abs() < 1e-10 * direct.abs().max(1.0));
        let xbx = x.transpose() * p.b().as_matrix() * &x;
        for rr in 0..3 {
            for ss in 0..3 {
                let v = va.dot(&(b_rs(&p, &g, rr, ss) * &va));
                assert!((v - xbx[(rr, ss)]).abs() < 1e-10 * xbx[(rr, ss)].abs().max(1.0));
            }
        }
    }
}

#[test]
fn g_update_is_b_orthonormal() {
    let mut r = rng(5);
    let p = random_problem(&mut r, 4, 3, 2, 2);
    let a = random_orthonormal(&mut r, 3, 2);
    let (g, obj) = update_g(&p, &a, None).unwrap();
    let (_, bg) = g_system(&p, &a);
    let gs = stack_g(&g);
    assert!((gs.transpose() * bg * &gs - DMatrix::identity(2, 2)).amax() < 1e-8);
    let x = assemble_x(&g, &a);
    assert!((p.objective(&x) - obj).abs() < 1e-10 * obj.abs().max(1.0));

    // Any other B_G-orthonormal G is no better.
    let (qg, bg) = g_system(&p, &a);
    let l = cholesky(&SymmetricMatrix::new(bg).unwrap(), None).unwrap();
    for _ in 0..20 {
        let v = random_orthonormal(&mut r, 8, 2);
        let other = l.clone().transpose().solve_upper_triangular(&v).unwrap();
        assert!((other.transpose() * &qg * &other).trace() >= obj - 1e-10);
    }
}

#[test]
fn g_update_with_identity_factor_is_plain_gevd() {
    let mut r = rng(6);
    let p = random_problem(&mut r, 3, 3, 2, 3);
    let (_, obj) = update_g(&p, &DMatrix::identity(3, 3), None).unwrap();
    let expected = gevd_smallest_sum(p.q().as_matrix(), p.b().as_matrix(), 2);
    assert!((obj - expected).abs() < 1e-10);
}

#[test]
fn g_update_with_q_equal_b_gives_r() {
    let mut r = rng(7);
    let b = random_spd(&mut r, 6);
    let p = CgevdProblem::new(b.clone(), b, 3, 2, 2, 2).unwrap();
    let a = random_orthonormal(&mut r, 2, 2);
    let (_, obj) = update_g(&p, &a, None).unwrap();
    assert!((obj - 2.0).abs() < 1e-10);
}

#[test]
fn single_eigenvector_a_update_reduces_to_sphere_problem() {
    let mut r = rng(8);
    let p = random_problem(&mut r, 3, 4, 1, 2);
    let a = random_orthonormal(&mut r, 4, 2);
    let state = state_for(&p, &a);
    let upd = update_a(&p, &state, &CgevdOptions::default()).unwrap();
    assert!(upd.accepted);

    let qa = q_a(&p, &state.g);
    let b11 = SymmetricMatrix::new(b_rs(&p, &state.g, 0, 0)).unwrap();
    let f = cholesky(&b11, None).unwrap();
    let t = solve_lower(&f, &qa);
    let t = solve_lower(&f, &t.transpose());
    let lambda_min = sym_evd(&SymmetricMatrix::new(t).unwrap()).unwrap().eigenvalues[0];
    let va = vec_of(&upd.a.transpose());
    assert!((va.dot(&(&qa * &va)) - lambda_min).abs() < 1e-7 * lambda_min.abs().max(1.0));
}

#[test]
fn a_update_meets_all_constraints() {
    let mut r = rng(9);
    let p = random_problem(&mut r, 4, 3, 2, 2);
    let a = random_orthonormal(&mut r, 3, 2);
    let state = state_for(&p, &a);
    let upd = update_a(&p, &state, &CgevdOptions::default()).unwrap();
    let problem = a_problem(&p, &state.g).unwrap();
    let res = problem.constraint_residuals(&vec_of(&upd.a.transpose()));
    assert_eq!(res.len(), 3);
    assert!(res.iter().all(|v| v.abs() < 1e-6), "{res:?}");
    let before = vec_of(&a.transpose());
    let after = vec_of(&upd.a.transpose());
    assert!(problem.q().quad_form(&after) <= problem.q().quad_form(&before) + 1e-12);
}

#[test]
fn optimal_a_is_kept() {
    let mut r = rng(10);
    let p = random_problem(&mut r, 3, 3, 2, 3);
    let a = random_orthonormal(&mut r, 3, 3);
    let state = state_for(&p, &a);
    let upd = update_a(&p, &state, &CgevdOptions::default()).unwrap();
    let problem = a_problem(&p, &state.g).unwrap();
    let before = problem.q().quad_form(&vec_of(&a.transpose()));
    let after = problem.q().quad_form(&vec_of(&upd.a.transpose()));
    assert!((before - after).abs() < 1e-8 * before.abs().max(1.0));
}

#[test]
fn non_binding_structure_matches_plain_gevd() {
    for seed in 0..5 {
        let mut r = rng(20 + seed);
        let p = random_problem(&mut r, 3, 3, 2, 3);
        let sol = solve(&p, &CgevdOptions { seed, ..CgevdOptions::default() }).unwrap();
        let expected = gevd_smallest_sum(p.q().as_matrix(), p.b().as_matrix(), 2);
        assert!((sol.state.objective - expected).abs() < 1e-6, "seed {seed}");
    }
}

#[test]
fn sweeps_are_monotone_and_feasible() {
    for seed in 0..20u64 {
        let mut r = rng(100 + seed);
        let p = random_problem(&mut r, 4, 3, 2, 2);
        let sol = solve(&p, &CgevdOptions { seed, ..CgevdOptions::default() }).unwrap();
        for w in sol.history.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-12 * w[0].objective.abs().max(1.0));
        }
        assert!(sol.state.feasibility < 1e-6, "seed {seed}: {}", sol.state.feasibility);
        let x = sol.state.x();
        assert!((p.objective(&x) - sol.state.objective).abs() < 1e-10 * sol.state.objective.max(1.0));
    }
}

#[test]
fn maximizing_form_shifts_the_objective() {
    let mut r = rng(30);
    let d = discriminant_data(&mut r, 6, 3, 20);
    let m = SymmetricMatrix::new(d.between.clone()).unwrap();
    let b = SymmetricMatrix::new(d.within.clone()).unwrap();
    let (p, c) = CgevdProblem::maximizing(m, b, 3, 2, 2, 2).unwrap();
    let sol = solve(&p, &CgevdOptions::default()).unwrap();
    let x = sol.state.x();
    let gained = (x.transpose() * &d.between * &x).trace();
    assert!((2.0 * c - gained - sol.state.objective).abs() < 1e-8 * c.max(1.0));
}

#[test]
fn discriminant_projection_beats_random_structure() {
    let (i, j, rr, s) = (4, 3, 2, 2);
    for seed in 0..20u64 {
        let mut r = rng(500 + seed);
        let d = discriminant_data(&mut r, i * j, 3, 30);
        let m = SymmetricMatrix::new(d.between.clone()).unwrap();
        let b = SymmetricMatrix::new(d.within.clone()).unwrap();
        let (p, _) = CgevdProblem::maximizing(m, b, i, j, rr, s).unwrap();
        let sol = solve(&p, &CgevdOptions { seed, ..CgevdOptions::default() }).unwrap();
        let (g, a) = random_factors(&mut r, i, j, rr, s);
        let learned = fisher_ratio(&sol.state.x(), &d);
        let random = fisher_ratio(&assemble_x(&g, &a), &d);
        assert!(learned > random, "seed {seed}: {learned} vs {random}");
    }
}
