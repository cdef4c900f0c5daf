//! Independent a-posteriori check of a primal/dual pair.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::problem::SdpProblem;
use crate::solver::SdpSolution;

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// Smallest eigenvalue of `F(x)` per block.
    pub primal_min_eigenvalues: Vec<f64>,
    /// Smallest eigenvalue of `Z` per block.
    pub dual_min_eigenvalues: Vec<f64>,
    /// `max_i |Tr(F_i Z) - c_i - (A^T y)_i|`.
    pub dual_residual: f64,
    /// `max_k |(A x)_k - b_k|`.
    pub equality_residual: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `c^T x - dual objective`.
    pub gap: f64,
    /// `Tr(Z F(x))`.
    pub complementarity: f64,
    pub weak_duality_ok: bool,
    pub violations: Vec<String>,
}

impl VerificationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Recomputes feasibility, objectives and gap from the problem data alone;
/// every quantity outside `tol` is listed in `violations`.
pub fn verify_solution(problem: &SdpProblem, sol: &SdpSolution, tol: f64) -> VerificationReport {
    let mut violations = Vec::new();
    let fx = problem.evaluate(&sol.x);
    let primal_min_eigenvalues: Vec<f64> = fx.iter().map(min_eig).collect();
    let dual_min_eigenvalues: Vec<f64> = sol.z.iter().map(min_eig).collect();
    for (b, e) in primal_min_eigenvalues.iter().enumerate() {
        if *e < -tol {
            violations.push(format!("F(x) block {b} has eigenvalue {e:.3e}"));
        }
    }
    for (b, e) in dual_min_eigenvalues.iter().enumerate() {
        if *e < -tol {
            violations.push(format!("Z block {b} has eigenvalue {e:.3e}"));
        }
    }

    let mut aty = vec![0.0; problem.num_vars()];
    for (eq, y) in problem.equalities().iter().zip(&sol.y) {
        for &(v, a) in &eq.coeffs {
            aty[v] += a * y;
        }
    }
    let dual_residual = problem
        .coefficients()
        .iter()
        .zip(problem.objective())
        .zip(&aty)
        .map(|((f, c), ay)| (f.inner(&sol.z) - c - ay).abs())
        .fold(0.0, f64::max);
    if dual_residual > tol {
        violations.push(format!("dual residual {dual_residual:.3e}"));
    }
    let equality_residual = problem
        .equalities()
        .iter()
        .map(|eq| {
            let ax: f64 = eq.coeffs.iter().map(|&(v, a)| a * sol.x[v]).sum();
            (ax - eq.rhs).abs()
        })
        .fold(0.0, f64::max);
    if equality_residual > tol {
        violations.push(format!("equality residual {equality_residual:.3e}"));
    }

    let primal_objective = problem.primal_objective(&sol.x);
    let b_dot_y: f64 = problem
        .equalities()
        .iter()
        .zip(&sol.y)
        .map(|(e, y)| e.rhs * y)
        .sum();
    let dual_objective = -problem.constant().inner(&sol.z) - b_dot_y;
    let gap = primal_objective - dual_objective;
    let complementarity: f64 = fx.iter().zip(&sol.z).map(|(f, z)| f.dot(z)).sum();
    let weak_duality_ok = gap >= -tol;
    if !weak_duality_ok {
        violations.push(format!("negative duality gap {gap:.3e}"));
    }
    let scale = primal_objective.abs().max(1.0);
    if complementarity.abs() > tol * scale {
        violations.push(format!("complementarity {complementarity:.3e}"));
    }
    VerificationReport {
        primal_min_eigenvalues,
        dual_min_eigenvalues,
        dual_residual,
        equality_residual,
        primal_objective,
        dual_objective,
        gap,
        complementarity,
        weak_duality_ok,
        violations,
    }
}
