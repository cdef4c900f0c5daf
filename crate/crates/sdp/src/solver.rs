//! Primal-dual path-following interior-point method.
//!
//! The problem `min c^T x  s.t.  F_0 + sum x_i F_i = S, S PSD` is written as
//! `G x + s = h` with `G x = -sum x_i F_i` and `h = F_0`, and solved through
//! the homogeneous self-dual embedding
//!
//! ```text
//!     0 = G^T z + c tau
//!     s = -G x + h tau
//!     kappa = -c^T x - h^T z
//! ```
//!
//! with Nesterov-Todd scaling and Mehrotra predictor-corrector steps. The
//! Newton systems reduce to the Schur complement
//! `H_ij = Tr(F_i W^-1 F_j W^-1)`, where `W` is the NT scaling point. Linear
//! equalities are eliminated up front, so all remaining variables are free.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rayon::prelude::*;

use crate::error::{Result, SdpError};
use crate::problem::{SdpProblem, SparseBlockMatrix};
use crate::schur::{SchurFactor, SchurLayout, SchurMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative duality-gap tolerance, `gap <= gap_tol * max(1, |objective|)`.
    pub gap_tol: f64,
    /// Relative primal and dual residual tolerance.
    pub feas_tol: f64,
    pub max_iters: usize,
    /// Fraction of the step to the boundary of the cone.
    pub step_fraction: f64,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            feas_tol: 1e-9,
            max_iters: 200,
            step_fraction: 0.99,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::PrimalInfeasible => "primal-infeasible",
            SolveStatus::DualInfeasible => "dual-infeasible",
            SolveStatus::MaxIterations => "max-iterations",
        })
    }
}

/// Objective values and residuals of one interior-point iterate, normalized
/// by the homogenizing variable `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `c^T x / tau` when `x / tau` is primal feasible; an upper bound on the optimum.
    pub primal_bound: Option<f64>,
    /// Dual objective of the projection of `Z / tau` onto the dual affine
    /// set, when that projection is PSD; a lower bound on the optimum.
    pub dual_bound: Option<f64>,
    /// Complementarity `<S, Z>` of the normalized iterate.
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub tau: f64,
    pub kappa: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Primal point (or, for `DualInfeasible`, an improving ray).
    pub x: Vec<f64>,
    /// Multipliers of the linear equalities.
    pub y: Vec<f64>,
    /// Dual matrix per block (or, for `PrimalInfeasible`, a Farkas certificate).
    pub z: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub history: Vec<IterateRecord>,
}

type Blocks = Vec<DMatrix<f64>>;

/// Corrector steps below this fall back to a pure centering step.
const SHORT_STEP: f64 = 0.1;

/// Iterative refinement rounds on the dual equation per Newton solve.
const REFINEMENT_ROUNDS: usize = 10;

fn blocks_dot(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn blocks_norm(a: &[DMatrix<f64>]) -> f64 {
    blocks_dot(a, a).sqrt()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut m = m.clone();
    symmetrize(&mut m);
    SymmetricEigen::new(m).eigenvalues.min()
}

/// Original variables in terms of the reduced ones.
#[derive(Debug, Clone)]
struct Reduction {
    num_orig: usize,
    /// Original index of each reduced variable.
    kept: Vec<usize>,
    /// `x[pivot] = rhs - sum coef * x[free]` over original indices.
    pivots: Vec<(usize, f64, Vec<(usize, f64)>)>,
    objective_offset: f64,
}

enum Presolve {
    Ready(Box<Prepared>),
    Infeasible(SolveStatus, Vec<f64>),
}

struct Prepared {
    sizes: Vec<usize>,
    c: DVector<f64>,
    f0: Blocks,
    cols: Vec<SparseBlockMatrix>,
    block_vars: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    scale: Vec<f64>,
    layout: SchurLayout,
    reduction: Reduction,
}

fn presolve(problem: &SdpProblem) -> Presolve {
    let n = problem.num_vars();
    let mut cost: Vec<f64> = problem.objective().to_vec();
    let mut cols: Vec<SparseBlockMatrix> = problem.coefficients().to_vec();
    let mut f0 = problem.constant().clone();

    // Row-reduce the equality system with partial pivoting.
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for eq in problem.equalities() {
        let mut r = vec![0.0; n];
        for &(v, a) in &eq.coeffs {
            r[v] += a;
        }
        rows.push(r);
        rhs.push(eq.rhs);
    }
    let amax = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * amax.max(1.0);
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut rank = 0;
    for col in 0..n {
        if rank == rows.len() {
            break;
        }
        let (best, best_val) = (rank..rows.len())
            .map(|r| (r, rows[r][col].abs()))
            .fold((rank, 0.0), |acc, it| if it.1 > acc.1 { it } else { acc });
        if best_val <= tol {
            continue;
        }
        rows.swap(rank, best);
        rhs.swap(rank, best);
        let p = rows[rank][col];
        for v in rows[rank].iter_mut() {
            *v /= p;
        }
        rhs[rank] /= p;
        for r in 0..rows.len() {
            if r != rank && rows[r][col] != 0.0 {
                let f = rows[r][col];
                let (pivot_row, pivot_rhs) = (rows[rank].clone(), rhs[rank]);
                for (a, b) in rows[r].iter_mut().zip(&pivot_row) {
                    *a -= f * b;
                }
                rhs[r] -= f * pivot_rhs;
            }
        }
        pivot_cols.push(col);
        rank += 1;
    }
    let bmax = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if rhs[rank..].iter().any(|b| b.abs() > 1e-9 * bmax.max(1.0)) {
        return Presolve::Infeasible(SolveStatus::PrimalInfeasible, vec![0.0; n]);
    }
    let is_pivot: Vec<bool> = (0..n).map(|j| pivot_cols.contains(&j)).collect();
    let mut pivots = Vec::with_capacity(rank);
    let mut objective_offset = 0.0;
    for (r, &pc) in pivot_cols.iter().enumerate() {
        let deps: Vec<(usize, f64)> = (0..n)
            .filter(|&j| !is_pivot[j] && rows[r][j] != 0.0)
            .map(|j| (j, rows[r][j]))
            .collect();
        f0.axpy(rhs[r], &cols[pc]);
        objective_offset += cost[pc] * rhs[r];
        for &(j, a) in &deps {
            let pcol = cols[pc].clone();
            cols[j].axpy(-a, &pcol);
            cost[j] -= cost[pc] * a;
        }
        pivots.push((pc, rhs[r], deps));
    }

    f0.compress();
    let cnorm = cost.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut kept = Vec::new();
    let mut kept_cols = Vec::new();
    let mut kept_cost = Vec::new();
    let mut scale = Vec::new();
    for j in 0..n {
        if is_pivot[j] {
            continue;
        }
        cols[j].compress();
        let norm = cols[j].frobenius_sq().sqrt();
        if norm == 0.0 {
            if cost[j].abs() > 1e-14 * cnorm {
                // x_j moves freely without touching the constraint.
                let mut ray = vec![0.0; n];
                ray[j] = -cost[j].signum();
                return Presolve::Infeasible(SolveStatus::DualInfeasible, ray);
            }
            continue;
        }
        kept.push(j);
        kept_cost.push(cost[j] / norm);
        kept_cols.push(cols[j].scaled(1.0 / norm));
        scale.push(norm);
    }

    let sizes = problem.block_sizes().to_vec();
    let nblocks = sizes.len();
    let mut block_vars: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); nblocks];
    let mut var_blocks: Vec<Vec<usize>> = Vec::with_capacity(kept_cols.len());
    for (k, col) in kept_cols.iter().enumerate() {
        let mut blocks: Vec<usize> = Vec::new();
        for e in col.entries() {
            if blocks.last() != Some(&e.block) {
                blocks.push(e.block);
                block_vars[e.block].push((k, Vec::new()));
            }
            block_vars[e.block]
                .last_mut()
                .expect("pushed above")
                .1
                .push((e.row, e.col, e.value));
        }
        var_blocks.push(blocks);
    }
    let layout = SchurLayout::new(nblocks, &var_blocks);
    let mut f0_dense: Blocks = sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
    f0.add_to_dense(1.0, &mut f0_dense);

    Presolve::Ready(Box::new(Prepared {
        sizes,
        c: DVector::from_vec(kept_cost),
        f0: f0_dense,
        cols: kept_cols,
        block_vars,
        scale,
        layout,
        reduction: Reduction {
            num_orig: n,
            kept,
            pivots,
            objective_offset,
        },
    }))
}

/// Per-block Nesterov-Todd scaling: `R^T Z R = R^-1 S R^-T = diag(lambda)`.
#[derive(Clone)]
struct Scaling {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn nt_scaling(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let ls = s.clone().cholesky()?.unpack();
    let lz = z.clone().cholesky()?.unpack();
    let prod = lz.tr_mul(&ls);
    let svd = SVD::new(prod, true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let lambda = svd.singular_values;
    if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return None;
    }
    let inv_sqrt = lambda.map(|l| 1.0 / l.sqrt());
    // R = L_s V diag(lambda)^-1/2,  R^-1 = diag(lambda)^-1/2 U^T L_z^T
    let mut r = ls * vt.transpose();
    for (j, f) in inv_sqrt.iter().enumerate() {
        r.column_mut(j).scale_mut(*f);
    }
    let mut rinv = u.transpose() * lz.transpose();
    for (i, f) in inv_sqrt.iter().enumerate() {
        rinv.row_mut(i).scale_mut(*f);
    }
    Some(Scaling { r, rinv, lambda })
}

impl Scaling {
    /// `W^-1 = R^-T R^-1`.
    fn inverse_point(&self) -> DMatrix<f64> {
        let mut d = self.rinv.tr_mul(&self.rinv);
        symmetrize(&mut d);
        d
    }
}

/// Solution of `lambda o u = d` for diagonal `lambda`, `o` the symmetrized product.
fn lyapunov_solve(lambda: &DVector<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| {
        2.0 * d[(i, j)] / (lambda[i] + lambda[j])
    })
}

/// Largest `alpha` with `diag(lambda) + alpha * delta` PSD.
fn max_step(lambda: &DVector<f64>, delta: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let m = DMatrix::from_fn(n, n, |i, j| delta[(i, j)] / (lambda[i] * lambda[j]).sqrt());
    let e = min_eigenvalue(&m);
    if e < 0.0 {
        -1.0 / e
    } else {
        f64::INFINITY
    }
}

impl Prepared {
    fn apply_g(&self, x: &DVector<f64>) -> Blocks {
        let mut out: Blocks = self.sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
        for (k, col) in self.cols.iter().enumerate() {
            if x[k] != 0.0 {
                col.add_to_dense(-x[k], &mut out);
            }
        }
        out
    }

    /// `(Tr(F_i V))_i = -G^T V`.
    fn inner_all(&self, v: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(self.cols.len(), self.cols.iter().map(|f| f.inner(v)))
    }

    fn assemble(&self, d: &[DMatrix<f64>]) -> SchurMatrix {
        let locals: Vec<DMatrix<f64>> = self
            .block_vars
            .par_iter()
            .enumerate()
            .map(|(b, vars)| {
                let db = &d[b];
                let n = db.nrows();
                let mut local = DMatrix::zeros(vars.len(), vars.len());
                let mut y = DMatrix::<f64>::zeros(n, n);
                for (jl, (_, entries_j)) in vars.iter().enumerate() {
                    y.fill(0.0);
                    for &(r, c, v) in entries_j {
                        if r == c {
                            y.ger(v, &db.column(r), &db.column(r), 1.0);
                        } else {
                            y.ger(v, &db.column(r), &db.column(c), 1.0);
                            y.ger(v, &db.column(c), &db.column(r), 1.0);
                        }
                    }
                    for (il, (_, entries_i)) in vars.iter().enumerate() {
                        let mut acc = 0.0;
                        for &(r, c, v) in entries_i {
                            acc += if r == c {
                                v * y[(r, r)]
                            } else {
                                v * (y[(r, c)] + y[(c, r)])
                            };
                        }
                        local[(il, jl)] = acc;
                    }
                }
                local
            })
            .collect();
        let mut h = SchurMatrix::zeros(&self.layout);
        for (b, local) in locals.iter().enumerate() {
            let vars = &self.block_vars[b];
            for (il, (i, _)) in vars.iter().enumerate() {
                for (jl, (j, _)) in vars.iter().enumerate() {
                    h.add(&self.layout, *i, *j, local[(il, jl)]);
                }
            }
        }
        h
    }
}

struct Newton<'a> {
    prep: &'a Prepared,
    factor: SchurFactor,
    d: Blocks,
}

impl<'a> Newton<'a> {
    fn new(prep: &'a Prepared, d: Blocks) -> Option<Self> {
        let h = prep.assemble(&d);
        let mut reg = 1e-12;
        let factor = loop {
            if let Some(f) = h.factor(reg) {
                break f;
            }
            reg *= 100.0;
            if reg > 1e-4 {
                return None;
            }
        };
        Some(Self { prep, factor, d })
    }

    /// Solves `[0 G^T; G -W^T W] [dx; dz] = [bx; bz]`.
    fn solve(&self, bx: &DVector<f64>, bz: &[DMatrix<f64>]) -> (DVector<f64>, Blocks) {
        let layout = &self.prep.layout;
        let t: Blocks = self
            .d
            .iter()
            .zip(bz)
            .map(|(d, b)| d * b * d)
            .collect();
        let rhs = bx - self.prep.inner_all(&t);
        let dx = self.factor.solve(layout, &rhs);
        let gdx = self.prep.apply_g(&dx);
        let dz: Blocks = self
            .d
            .iter()
            .zip(gdx.iter().zip(bz))
            .map(|(d, (g, b))| {
                let mut m = d * (g - b) * d;
                symmetrize(&mut m);
                m
            })
            .collect();
        (dx, dz)
    }
}

struct Direction {
    dx: DVector<f64>,
    dtau: f64,
    dkappa: f64,
    ds: Blocks,
    dz: Blocks,
    ds_scaled: Blocks,
    dz_scaled: Blocks,
}

/// Solves a semidefinite program.
///
/// Returns `Err` for structurally inconsistent problems and for numerical
/// breakdowns (Schur complement not positive definite after
/// regularization); infeasibility and iteration limits are reported
/// through [`SolveStatus`].
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let mut problem = problem.clone();
    problem.compress();
    let prep = match presolve(&problem) {
        Presolve::Ready(p) => p,
        Presolve::Infeasible(status, x) => {
            let (p, d) = match status {
                SolveStatus::PrimalInfeasible => (f64::INFINITY, f64::INFINITY),
                _ => (f64::NEG_INFINITY, f64::NEG_INFINITY),
            };
            return Ok(SdpSolution {
                status,
                x,
                y: vec![0.0; problem.equalities().len()],
                z: problem.zero_blocks(),
                primal_objective: p,
                dual_objective: d,
                gap: f64::NAN,
                iterations: 0,
                history: Vec::new(),
            });
        }
    };
    let prep = &*prep;
    let m = prep.cols.len();
    let degree: f64 = prep.sizes.iter().sum::<usize>() as f64;
    let offset = prep.reduction.objective_offset;
    let c = &prep.c;
    let resx0 = c.norm().max(1.0);
    let resz0 = blocks_norm(&prep.f0).max(1.0);

    let failure = |iteration: usize, reason: &str, pres: f64, dres: f64, gap: f64| {
        SdpError::SolverFailure {
            iteration,
            reason: reason.to_string(),
            pres,
            dres,
            gap,
        }
    };

    // Starting point from the least-squares systems with identity scaling.
    let identity: Blocks = prep.sizes.iter().map(|&s| DMatrix::identity(s, s)).collect();
    let zeros_z: Blocks = prep.sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
    let gram = Newton::new(prep, identity.clone())
        .ok_or_else(|| failure(0, "singular constraint Gram matrix", f64::NAN, f64::NAN, f64::NAN))?;
    let (mut x, minus_s) = gram.solve(&DVector::zeros(m), &prep.f0);
    let mut s: Blocks = minus_s.iter().map(|b| -b).collect();
    let (_, mut z) = gram.solve(&(-c), &zeros_z);
    let shift = |blocks: &mut Blocks| {
        let alpha = -blocks
            .iter()
            .map(min_eigenvalue)
            .fold(f64::INFINITY, f64::min);
        if alpha >= 0.0 {
            for b in blocks.iter_mut() {
                for i in 0..b.nrows() {
                    b[(i, i)] += 1.0 + alpha;
                }
            }
        }
    };
    shift(&mut s);
    shift(&mut z);
    let mut tau = 1.0;
    let mut kappa = 1.0;
    let scale_all = |s: &Blocks, z: &Blocks| -> Option<Vec<Scaling>> {
        s.iter().zip(z).map(|(s, z)| nt_scaling(s, z)).collect()
    };
    let mut scalings = scale_all(&s, &z)
        .ok_or_else(|| failure(0, "initial point not interior", f64::NAN, f64::NAN, f64::NAN))?;

    let mut history = Vec::new();
    let mut last_step = 0.0;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    for iter in 0..=opts.max_iters {
        iterations = iter;
        let fz = prep.inner_all(&z);
        let rx: DVector<f64> = c * tau - &fz;
        let gx = prep.apply_g(&x);
        let hz = blocks_dot(&prep.f0, &z);
        let cx = c.dot(&x);
        let rz: Blocks = s
            .iter()
            .zip(&gx)
            .zip(&prep.f0)
            .map(|((s, g), h)| s + g - h * tau)
            .collect();
        let rt = kappa + cx + hz;
        let gap: f64 = scalings
            .iter()
            .map(|sc| sc.lambda.iter().map(|l| l * l).sum::<f64>())
            .sum();
        let mu = (gap + tau * kappa) / (degree + 1.0);
        let pcost = cx / tau + offset;
        let dcost = -hz / tau + offset;
        let pres = blocks_norm(&rz) / tau / resz0;
        let dres = rx.norm() / tau / resx0;
        let ngap = gap / (tau * tau);
        let primal_bound = s
            .iter()
            .zip(&rz)
            .all(|(s, r)| min_eigenvalue(&((s - r) / tau)) >= -opts.feas_tol * resz0)
            .then_some(pcost);
        let dual_bound = {
            let r = &fz / tau - c;
            let (_, corr) = gram.solve(&r, &zeros_z);
            let zhat: Blocks = z.iter().zip(&corr).map(|(z, k)| z / tau + k).collect();
            zhat.iter()
                .all(|b| min_eigenvalue(b) >= -opts.feas_tol)
                .then(|| -blocks_dot(&prep.f0, &zhat) + offset)
        };
        history.push(IterateRecord {
            iteration: iter,
            primal_objective: pcost,
            dual_objective: dcost,
            primal_bound,
            dual_bound,
            gap: ngap,
            primal_residual: pres,
            dual_residual: dres,
            tau,
            kappa,
            step: last_step,
        });
        if opts.verbose {
            eprintln!(
                "{iter:3}: pcost {pcost:+.10e} dcost {dcost:+.10e} gap {ngap:.2e} pres {pres:.2e} dres {dres:.2e} k/t {:.2e} step {last_step:.3}",
                kappa / tau
            );
        }
        let scale_obj = pcost.abs().min(dcost.abs()).max(1.0);
        if pres <= opts.feas_tol && dres <= opts.feas_tol && ngap <= opts.gap_tol * scale_obj {
            status = SolveStatus::Optimal;
            break;
        }
        if hz < 0.0 {
            let pinf = fz.norm() / resx0 / (-hz);
            if pinf <= opts.feas_tol {
                status = SolveStatus::PrimalInfeasible;
                break;
            }
        }
        if cx < 0.0 {
            let sgx: f64 = s
                .iter()
                .zip(&gx)
                .map(|(s, g)| (s + g).norm_squared())
                .sum::<f64>()
                .sqrt();
            if sgx / resz0 / (-cx) <= opts.feas_tol {
                status = SolveStatus::DualInfeasible;
                break;
            }
        }
        if iter == opts.max_iters {
            break;
        }

        let d: Blocks = scalings.iter().map(Scaling::inverse_point).collect();
        let newton = Newton::new(prep, d)
            .ok_or_else(|| failure(iter, "Schur complement not positive definite", pres, dres, ngap))?;
        let neg_c = -c;
        let (dx2, dz2) = newton.solve(&neg_c, &prep.f0);
        let denom = -kappa / tau + c.dot(&dx2) + blocks_dot(&prep.f0, &dz2);

        let direction = |sigma: f64, u: &Blocks, dkap_rhs: f64| -> Direction {
            let eta = 1.0 - sigma;
            let bx = &rx * (-eta);
            let bz: Blocks = rz
                .iter()
                .zip(u.iter().zip(&scalings))
                .map(|(r, (u, sc))| sc.r.clone() * u * sc.r.transpose() - r * eta)
                .collect();
            let (dx1, dz1) = newton.solve(&bx, &bz);
            let dtau = (-eta * rt + dkap_rhs / tau - c.dot(&dx1) - blocks_dot(&prep.f0, &dz1)) / denom;
            let mut dx = dx1 + &dx2 * dtau;
            let dkappa = -(dkap_rhs + kappa * dtau) / tau;
            let mut dz: Blocks = dz1
                .iter()
                .zip(&dz2)
                .map(|(z1, z2)| {
                    let mut m = z1 + z2 * dtau;
                    symmetrize(&mut m);
                    m
                })
                .collect();
            // Refine (dx, dz) against the linearized dual equation
            // G^T dz + c dtau = -eta rx with the same Newton operator, which
            // leaves the linearized complementarity untouched.
            let target = &rx * (-eta) - c * dtau;
            let tnorm = target.norm().max(rx.norm()).max(f64::MIN_POSITIVE);
            for _ in 0..REFINEMENT_ROUNDS {
                let dual_res = &target + prep.inner_all(&dz);
                if dual_res.norm() <= 1e-14 * tnorm {
                    break;
                }
                let (rx_corr, rz_corr) = newton.solve(&dual_res, &zeros_z);
                dx += rx_corr;
                for (m, k) in dz.iter_mut().zip(&rz_corr) {
                    *m += k;
                }
            }
            // What refinement cannot remove goes through the Euclidean
            // projection, which is exact but ignores the scaling.
            let dual_res = &target + prep.inner_all(&dz);
            let (_, corr) = gram.solve(&dual_res, &zeros_z);
            for (m, k) in dz.iter_mut().zip(&corr) {
                *m += k;
            }
            // ds from the linearized primal equation, so that the primal
            // residual decreases exactly by (1 - alpha * eta).
            let gdx = prep.apply_g(&dx);
            let mut ds = Vec::with_capacity(scalings.len());
            let mut dz_scaled = Vec::with_capacity(scalings.len());
            let mut ds_scaled = Vec::with_capacity(scalings.len());
            for (k, sc) in scalings.iter().enumerate() {
                let mut sk = &prep.f0[k] * dtau - &rz[k] * eta - &gdx[k];
                symmetrize(&mut sk);
                let mut zs = sc.r.transpose() * &dz[k] * &sc.r;
                symmetrize(&mut zs);
                let mut ss = &sc.rinv * &sk * sc.rinv.transpose();
                symmetrize(&mut ss);
                ds.push(sk);
                dz_scaled.push(zs);
                ds_scaled.push(ss);
            }
            Direction {
                dx,
                dtau,
                dkappa,
                ds,
                dz,
                ds_scaled,
                dz_scaled,
            }
        };
        let step_to_boundary = |dir: &Direction| -> f64 {
            let mut alpha = f64::INFINITY;
            for (sc, (ds, dz)) in scalings.iter().zip(dir.ds_scaled.iter().zip(&dir.dz_scaled)) {
                alpha = alpha.min(max_step(&sc.lambda, ds)).min(max_step(&sc.lambda, dz));
            }
            if dir.dtau < 0.0 {
                alpha = alpha.min(-tau / dir.dtau);
            }
            if dir.dkappa < 0.0 {
                alpha = alpha.min(-kappa / dir.dkappa);
            }
            alpha
        };

        // Predictor.
        let u_aff: Blocks = scalings
            .iter()
            .map(|sc| DMatrix::from_diagonal(&sc.lambda))
            .collect();
        let aff = direction(0.0, &u_aff, tau * kappa);
        let alpha_aff = step_to_boundary(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let u_cc: Blocks = scalings
            .iter()
            .zip(aff.ds_scaled.iter().zip(&aff.dz_scaled))
            .map(|(sc, (ds, dz))| {
                let prod = ds * dz;
                let mut dsv = (&prod + prod.transpose()) * 0.5;
                for i in 0..sc.lambda.len() {
                    dsv[(i, i)] += sc.lambda[i] * sc.lambda[i] - sigma * mu;
                }
                lyapunov_solve(&sc.lambda, &dsv)
            })
            .collect();
        let dkap_cc = tau * kappa - sigma * mu + aff.dtau * aff.dkappa;
        let mut dir = direction(sigma, &u_cc, dkap_cc);
        let mut alpha = (opts.step_fraction * step_to_boundary(&dir)).min(1.0);
        // A short corrector step means the iterate has left the central
        // path; a pure centering step restores it without the second-order
        // term of a poor predictor.
        if alpha < SHORT_STEP {
            let u_c: Blocks = scalings
                .iter()
                .map(|sc| {
                    let mut dsv = DMatrix::from_diagonal(&sc.lambda.map(|l| l * l));
                    for i in 0..sc.lambda.len() {
                        dsv[(i, i)] -= mu;
                    }
                    lyapunov_solve(&sc.lambda, &dsv)
                })
                .collect();
            let centering = direction(1.0, &u_c, tau * kappa - mu);
            let alpha_c = (opts.step_fraction * step_to_boundary(&centering)).min(1.0);
            if alpha_c > alpha {
                dir = centering;
                alpha = alpha_c;
            }
        }

        // Step in the original coordinates and rescale from scratch, which
        // keeps the residuals exactly affine in the step.
        let mut updated = None;
        for _ in 0..30 {
            let step = |base: &Blocks, d: &Blocks| -> Blocks {
                base.iter()
                    .zip(d)
                    .map(|(b, d)| {
                        let mut m = b + d * alpha;
                        symmetrize(&mut m);
                        m
                    })
                    .collect()
            };
            let (s_new, z_new) = (step(&s, &dir.ds), step(&z, &dir.dz));
            let tau_new = tau + alpha * dir.dtau;
            let kappa_new = kappa + alpha * dir.dkappa;
            if tau_new > 0.0 && kappa_new > 0.0 {
                if let Some(t) = scale_all(&s_new, &z_new) {
                    updated = Some((t, s_new, z_new, tau_new, kappa_new));
                    break;
                }
            }
            alpha *= 0.8;
        }
        let Some((new_scalings, s_new, z_new, tau_new, kappa_new)) = updated else {
            return Err(failure(iter, "cannot keep iterate interior", pres, dres, ngap));
        };
        scalings = new_scalings;
        s = s_new;
        z = z_new;
        x += &dir.dx * alpha;
        tau = tau_new;
        kappa = kappa_new;
        last_step = alpha;
    }

    let s_final = s;
    let (x_red, z_out) = match status {
        SolveStatus::PrimalInfeasible => {
            let hz = blocks_dot(&prep.f0, &z);
            (DVector::zeros(m), z.iter().map(|b| b / (-hz)).collect())
        }
        SolveStatus::DualInfeasible => {
            let cx = c.dot(&x);
            (&x / (-cx), z.iter().map(|b| b * 0.0).collect::<Blocks>())
        }
        _ => (&x / tau, z.iter().map(|b| b / tau).collect::<Blocks>()),
    };
    let gap_final = blocks_dot(&s_final, &z) / (tau * tau);
    let x_orig = expand(&prep.reduction, &prep.scale, &x_red, status);
    let y = equality_multipliers(&problem, &z_out);
    let (pobj, dobj) = match status {
        SolveStatus::PrimalInfeasible => (f64::INFINITY, f64::INFINITY),
        SolveStatus::DualInfeasible => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        _ => {
            let p = problem.primal_objective(&x_orig);
            let b_dot_y: f64 = problem
                .equalities()
                .iter()
                .zip(&y)
                .map(|(e, y)| e.rhs * y)
                .sum();
            let d = -problem.constant().inner(&z_out) - b_dot_y;
            (p, d)
        }
    };
    Ok(SdpSolution {
        status,
        x: x_orig,
        y,
        z: z_out,
        primal_objective: pobj,
        dual_objective: dobj,
        gap: if pobj.is_finite() { pobj - dobj } else { gap_final },
        iterations,
        history,
    })
}

fn expand(red: &Reduction, scale: &[f64], x: &DVector<f64>, status: SolveStatus) -> Vec<f64> {
    let mut out = vec![0.0; red.num_orig];
    for (k, &j) in red.kept.iter().enumerate() {
        out[j] = x[k] / scale[k];
    }
    // Rays satisfy the homogeneous equalities.
    let homogeneous = status == SolveStatus::DualInfeasible;
    for (p, rhs, deps) in &red.pivots {
        let mut v = if homogeneous { 0.0 } else { *rhs };
        for &(j, a) in deps {
            v -= a * out[j];
        }
        out[*p] = v;
    }
    out
}

/// Least-squares multipliers `y` with `A^T y = (Tr(F_i Z) - c_i)_i`.
fn equality_multipliers(problem: &SdpProblem, z: &[DMatrix<f64>]) -> Vec<f64> {
    let k = problem.equalities().len();
    if k == 0 {
        return Vec::new();
    }
    let n = problem.num_vars();
    let mut at = DMatrix::<f64>::zeros(n, k);
    for (r, eq) in problem.equalities().iter().enumerate() {
        for &(v, a) in &eq.coeffs {
            at[(v, r)] += a;
        }
    }
    let g = DVector::from_iterator(
        n,
        problem
            .coefficients()
            .iter()
            .zip(problem.objective())
            .map(|(f, c)| f.inner(z) - c),
    );
    let svd = SVD::new(at, true, true);
    match svd.solve(&g, 1e-12) {
        Ok(y) => y.iter().copied().collect(),
        Err(_) => vec![0.0; k],
    }
}
