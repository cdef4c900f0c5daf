use gme_sdp::{
    embed_hermitian, solve, verify_solution, SdpProblem, SdpSolution, SolveStatus, SolverOptions,
};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `min t  s.t.  t I - A PSD`.
fn max_eigenvalue_problem(a: &DMatrix<f64>) -> SdpProblem {
    let n = a.nrows();
    let mut p = SdpProblem::new(vec![n]);
    let t = p.add_variable(1.0);
    for i in 0..n {
        p.add_entry(t, 0, i, i, 1.0);
        for j in i..n {
            p.add_constant_entry(0, i, j, -a[(i, j)]);
        }
    }
    p
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&g + g.transpose()) * 0.5
}

/// Weak duality on every iterate that carries a certified primal and dual
/// bound; the final iterate of an optimal solve must carry both.
fn assert_weak_duality(sol: &SdpSolution) {
    for it in &sol.history {
        if let (Some(p), Some(d)) = (it.primal_bound, it.dual_bound) {
            assert!(
                d <= p + 1e-8,
                "iterate {} violates weak duality: {d} > {p}",
                it.iteration
            );
        }
    }
    if sol.status == SolveStatus::Optimal {
        let last = sol.history.last().unwrap();
        assert!(
            last.primal_bound.is_some() && last.dual_bound.is_some(),
            "final iterate lacks certified bounds: {last:?}"
        );
    }
}

#[test]
fn max_eigenvalue_of_diag_is_two() {
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
    let p = max_eigenvalue_problem(&a);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_objective - 2.0).abs() < 1e-8);
    assert!((sol.dual_objective - 2.0).abs() < 1e-8);
    let report = verify_solution(&p, &sol, 1e-8);
    assert!(report.is_ok(), "{:?}", report.violations);
    assert_weak_duality(&sol);
}

#[test]
fn random_max_eigenvalue_problems_match_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..50 {
        let n = rng.random_range(1..=16);
        let a = random_symmetric(&mut rng, n);
        let expect = SymmetricEigen::new(a.clone()).eigenvalues.max();
        let p = max_eigenvalue_problem(&a);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial}");
        assert!(
            (sol.primal_objective - expect).abs() < 1e-7,
            "trial {trial}: {} vs {expect}",
            sol.primal_objective
        );
        let report = verify_solution(&p, &sol, 1e-8);
        assert!(report.is_ok(), "trial {trial}: {:?}", report.violations);
        assert_weak_duality(&sol);
    }
}

#[test]
fn hermitian_max_eigenvalue_through_embedding() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 5;
    let h = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let h = (&h + h.adjoint()) * Complex64::from(0.5);
    let expect = SymmetricEigen::new(h.clone()).eigenvalues.max();
    let p = max_eigenvalue_problem(&embed_hermitian(&h));
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert!((sol.primal_objective - expect).abs() < 1e-7);
}

#[test]
fn equality_constraints_are_eliminated() {
    // min x1 + x2  s.t.  [[x1, 1], [1, x2]] PSD,  x1 = 2 x2
    let mut p = SdpProblem::new(vec![2]);
    let x1 = p.add_variable(1.0);
    let x2 = p.add_variable(1.0);
    p.add_entry(x1, 0, 0, 0, 1.0);
    p.add_entry(x2, 0, 1, 1, 1.0);
    p.add_constant_entry(0, 0, 1, 1.0);
    p.add_equality(vec![(x1, 1.0), (x2, -2.0)], 0.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let expect = 3.0 / 2f64.sqrt();
    assert!((sol.primal_objective - expect).abs() < 1e-8);
    assert!((sol.x[0] - 2.0 * sol.x[1]).abs() < 1e-12);
    let report = verify_solution(&p, &sol, 1e-7);
    assert!(report.is_ok(), "{:?}", report.violations);
    assert!((report.dual_objective - expect).abs() < 1e-7);
    assert_weak_duality(&sol);
}

#[test]
fn multi_block_problem_with_shared_variable() {
    // min -x - y  s.t.  1 - x >= 0, 1 - y >= 0, [[1, x+y], [x+y, 4]] PSD
    let mut p = SdpProblem::new(vec![1, 1, 2]);
    let x = p.add_variable(-1.0);
    let y = p.add_variable(-1.0);
    p.add_constant_entry(0, 0, 0, 1.0);
    p.add_entry(x, 0, 0, 0, -1.0);
    p.add_constant_entry(1, 0, 0, 1.0);
    p.add_entry(y, 1, 0, 0, -1.0);
    p.add_constant_entry(2, 0, 0, 1.0);
    p.add_constant_entry(2, 1, 1, 4.0);
    p.add_entry(x, 2, 0, 1, 1.0);
    p.add_entry(y, 2, 0, 1, 1.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_objective + 2.0).abs() < 1e-8);
    assert_weak_duality(&sol);
}

#[test]
fn primal_infeasibility_is_detected() {
    // x >= 0 and -1 - x >= 0
    let mut p = SdpProblem::new(vec![2]);
    let x = p.add_variable(1.0);
    p.add_entry(x, 0, 0, 0, 1.0);
    p.add_entry(x, 0, 1, 1, -1.0);
    p.add_constant_entry(0, 1, 1, -1.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
    // Farkas certificate: Z PSD, Tr(F_1 Z) = 0, Tr(F_0 Z) = -1.
    let z = &sol.z[0];
    assert!(SymmetricEigen::new(z.clone()).eigenvalues.min() > -1e-8);
    assert!((z[(0, 0)] - z[(1, 1)]).abs() < 1e-6);
    assert!((-z[(1, 1)] + 1.0).abs() < 1e-6);
}

#[test]
fn dual_infeasibility_is_detected() {
    // min -x  s.t.  x >= 0 is unbounded
    let mut p = SdpProblem::new(vec![1]);
    let x = p.add_variable(-1.0);
    p.add_entry(x, 0, 0, 0, 1.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::DualInfeasible);
    assert!(sol.x[0] > 0.0);
}

#[test]
fn inconsistent_equalities_are_primal_infeasible() {
    let mut p = SdpProblem::new(vec![1]);
    let x = p.add_variable(1.0);
    p.add_entry(x, 0, 0, 0, 1.0);
    p.add_equality(vec![(x, 1.0)], 1.0);
    p.add_equality(vec![(x, 2.0)], 3.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
}

#[test]
fn perturbed_primal_point_is_flagged() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -1.0]);
    let p = max_eigenvalue_problem(&a);
    let mut sol = solve(&p, &SolverOptions::default()).unwrap();
    assert!(verify_solution(&p, &sol, 1e-8).is_ok());
    sol.x[0] -= 1.0;
    let report = verify_solution(&p, &sol, 1e-8);
    assert!(!report.is_ok());
    assert!(report.primal_min_eigenvalues[0] < -0.5);
}

#[test]
fn feasible_pairs_have_nonnegative_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let a = random_symmetric(&mut rng, n);
        let p = max_eigenvalue_problem(&a);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        // Any t above the optimum and the optimal Z form a feasible pair.
        let mut shifted = sol.clone();
        shifted.x[0] += rng.random_range(0.0..2.0);
        let report = verify_solution(&p, &shifted, 1e-7);
        assert!(report.gap >= -1e-8);
        assert!(report.weak_duality_ok);
    }
}

#[test]
fn solve_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_symmetric(&mut rng, 9);
    let p = max_eigenvalue_problem(&a);
    let s1 = solve(&p, &SolverOptions::default()).unwrap();
    let s2 = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(s1.x, s2.x);
    assert_eq!(s1.iterations, s2.iterations);
}

#[test]
fn sdpa_round_trip_solves_identically() {
    let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, -1.0, 1.0]);
    let p = max_eigenvalue_problem(&a);
    let q = SdpProblem::from_sdpa_str(&p.to_sdpa_string()).unwrap();
    let s1 = solve(&p, &SolverOptions::default()).unwrap();
    let s2 = solve(&q, &SolverOptions::default()).unwrap();
    assert!((s1.primal_objective - s2.primal_objective).abs() < 1e-12);
}
