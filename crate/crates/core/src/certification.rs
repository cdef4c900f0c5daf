//! Post-hoc checks on candidate states: marginal separability, detection by
//! a marginal witness, uniqueness, white-noise robustness and local-unitary
//! simplification.

use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;
use gme_sdp::{IterateRecord, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::configurations::MarginalConfiguration;
use crate::error::{invalid, Result};
use crate::tensor::{
    hermitian_eigen, partial_trace, partial_transpose, CMatrix, CVector, QuantumState, StateRepr, C64,
};
use crate::witness_search::{expand_witness, optimal_witness, CertificateCheck, Witness};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMargin {
    pub pair: (usize, usize),
    /// Smallest eigenvalue of the marginal transposed on the first party.
    pub min_pt_eigenvalue: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub pairs: Vec<PairMargin>,
    pub all_pass: bool,
    /// PPT implies separability for every pair (some side has dimension 2 or 3
    /// and the pair dimension is at most 6).
    pub ppt_implies_separable: bool,
}

pub fn check_all_marginals_separable(state: &QuantumState, tol: f64) -> Result<MarginalReport> {
    let layout = state.layout();
    let n = layout.n_parties();
    let dims = layout.dims();
    let mut pairs = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    let mut implies = true;
    for a in 0..n {
        for b in (a + 1)..n {
            let m = partial_trace(state, &[a, b])?;
            let sub = layout.subsystem(&[a, b])?;
            let pt = partial_transpose(&sub, &m, &[0])?;
            let (vals, _) = hermitian_eigen(&crate::tensor::hermitian_part(&pt))?;
            implies &= dims[a] * dims[b] <= 6;
            pairs.push(PairMargin {
                pair: (a, b),
                min_pt_eigenvalue: vals[0],
                pass: vals[0] >= -tol,
            });
        }
    }
    Ok(MarginalReport {
        all_pass: pairs.iter().all(|p| p.pass),
        pairs,
        ppt_implies_separable: implies,
    })
}

/// Optimum of the witness problem; negative certifies genuine multiparticle
/// entanglement from the marginals in `config`.
pub fn detection_value(state: &QuantumState, config: &MarginalConfiguration, solver: &SolverOptions) -> Result<f64> {
    Ok(optimal_witness(state, config, solver)?.value)
}

/// `(1 - p) rho + p 1/2^N`.
pub fn mix_with_white_noise(state: &QuantumState, p: f64) -> Result<QuantumState> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("noise level {p} outside [0, 1]"));
    }
    let d = state.layout().total_dim();
    let rho = state.density_matrix() * C64::from(1.0 - p) + CMatrix::identity(d, d) * C64::from(p / d as f64);
    QuantumState::mixed(state.layout().clone(), rho)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robustness {
    pub p_max: f64,
    pub probes: Vec<(f64, f64)>,
    pub warning: Option<String>,
    /// Iterate records of every witness solve, in probe order.
    #[serde(skip)]
    pub solver_histories: Vec<Vec<IterateRecord>>,
}

pub const BISECTION_STEPS: usize = 40;

/// Largest white-noise weight `p` at which the marginal witness still
/// detects the state with value below `-tol`, by bisection on `[0, 1]`.
pub fn noise_robustness(
    state: &QuantumState,
    config: &MarginalConfiguration,
    tol: f64,
    solver: &SolverOptions,
) -> Result<Robustness> {
    let mut out = Robustness {
        p_max: 0.0,
        probes: Vec::with_capacity(BISECTION_STEPS + 2),
        warning: None,
        solver_histories: Vec::with_capacity(BISECTION_STEPS + 2),
    };
    let probe = |out: &mut Robustness, p: f64| -> Result<f64> {
        let r = optimal_witness(&mix_with_white_noise(state, p)?, config, solver)?;
        out.probes.push((p, r.value));
        out.solver_histories.push(r.solver_history);
        Ok(r.value)
    };
    if probe(&mut out, 0.0)? >= -tol {
        return Ok(out);
    }
    if probe(&mut out, 1.0)? < -tol {
        out.p_max = 1.0;
        out.warning = Some("still detected at p = 1".into());
        return Ok(out);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if probe(&mut out, mid)? < -tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    out.p_max = lo;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Uniqueness {
    pub unique: bool,
    /// `lambda_2 - lambda_1` of the expanded witness.
    pub gap: f64,
    /// `|<psi|ground>|^2`.
    pub overlap: f64,
}

pub const UNIQUENESS_GAP: f64 = 1e-6;
pub const UNIQUENESS_OVERLAP: f64 = 0.999;

pub fn uniqueness_check(state: &QuantumState, witness: &Witness) -> Result<Uniqueness> {
    let Some(psi) = state.as_pure() else {
        return invalid("uniqueness check needs a pure state");
    };
    if state.layout() != &witness.layout {
        return invalid("state and witness layouts differ");
    }
    let (vals, vecs) = hermitian_eigen(&expand_witness(witness))?;
    let gap = vals[1] - vals[0];
    let overlap = vecs.column(0).dotc(psi).norm_sqr();
    Ok(Uniqueness {
        unique: gap >= UNIQUENESS_GAP && overlap >= UNIQUENESS_OVERLAP,
        gap,
        overlap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalUnitary {
    /// `(alpha, theta, phi)` per qubit.
    pub params: Vec<(f64, f64, f64)>,
}

impl LocalUnitary {
    pub fn identity(n: usize) -> Self {
        Self {
            params: vec![(0.0, 0.0, 0.0); n],
        }
    }

    fn from_flat(x: &[f64]) -> Self {
        Self {
            params: x.chunks(3).map(|c| (c[0], c[1], c[2])).collect(),
        }
    }

    pub fn factors(&self) -> Vec<CMatrix> {
        self.params.iter().map(|&(a, t, p)| qubit_unitary(a, t, p)).collect()
    }

    pub fn matrix(&self) -> CMatrix {
        self.factors()
            .iter()
            .fold(CMatrix::identity(1, 1), |acc, u| crate::tensor::kron(&acc, u))
    }
}

/// `[[e^{i a} cos p, e^{i t} sin p], [-e^{-i t} sin p, e^{-i a} cos p]]`.
pub fn qubit_unitary(alpha: f64, theta: f64, phi: f64) -> CMatrix {
    let (s, c) = phi.sin_cos();
    CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::from_polar(c, alpha),
            C64::from_polar(s, theta),
            -C64::from_polar(s, -theta),
            C64::from_polar(c, -alpha),
        ],
    )
}

/// Applies `U^dagger` factor by factor to a pure vector.
fn apply_factors_dagger(v: &CVector, factors: &[CMatrix]) -> CVector {
    let n = factors.len();
    let mut out = v.clone();
    for (q, u) in factors.iter().enumerate() {
        let ud = u.adjoint();
        let shift = n - 1 - q;
        let bit = 1usize << shift;
        let mut next = out.clone();
        for a in 0..out.len() {
            if a & bit != 0 {
                continue;
            }
            let (x0, x1) = (out[a], out[a | bit]);
            next[a] = ud[(0, 0)] * x0 + ud[(0, 1)] * x1;
            next[a | bit] = ud[(1, 0)] * x0 + ud[(1, 1)] * x1;
        }
        out = next;
    }
    out
}

/// `rho -> U^dagger rho U` with `U` the tensor product of qubit unitaries.
pub fn apply_local_unitary(state: &QuantumState, lu: &LocalUnitary) -> Result<QuantumState> {
    let layout = state.layout();
    if !layout.is_qubits() || layout.n_parties() != lu.params.len() {
        return invalid(format!(
            "local unitary on {} qubits applied to layout {:?}",
            lu.params.len(),
            layout.dims()
        ));
    }
    let factors = lu.factors();
    match state.repr() {
        StateRepr::Pure(v) => QuantumState::pure(layout.clone(), apply_factors_dagger(v, &factors)),
        StateRepr::Mixed(m) => {
            let u = lu.matrix();
            let rho = u.adjoint() * m * &u;
            QuantumState::mixed(layout.clone(), crate::tensor::hermitian_part(&rho))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifyOptions {
    pub restarts: usize,
    pub seed: u64,
    pub zero_threshold: f64,
    pub max_iters: u64,
}

impl Default for SimplifyOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            seed: 0,
            zero_threshold: 1e-6,
            max_iters: 4000,
        }
    }
}

pub fn count_zero_amplitudes(v: &CVector, threshold: f64) -> usize {
    v.iter().filter(|z| z.norm() < threshold).count()
}

struct Sparsity<'a> {
    psi: &'a CVector,
}

impl CostFunction for Sparsity<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    // Sum of |a_k|^(1/2), a smooth-almost-everywhere proxy for the count of
    // non-zero amplitudes.
    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, ArgminError> {
        let lu = LocalUnitary::from_flat(x);
        let out = apply_factors_dagger(self.psi, &lu.factors());
        Ok(out.iter().map(|z| z.norm().sqrt()).sum())
    }
}

/// Searches qubit-local unitaries that maximize the number of amplitudes
/// below the zero threshold. Nelder-Mead on a sparsity proxy from
/// `restarts` random starts plus the identity; the input is returned
/// unchanged if nothing beats it.
pub fn simplify_zero_pattern(state: &QuantumState, opts: &SimplifyOptions) -> Result<(QuantumState, LocalUnitary)> {
    let Some(psi) = state.as_pure() else {
        return invalid("zero-pattern simplification needs a pure state");
    };
    if !state.layout().is_qubits() {
        return invalid("zero-pattern simplification needs qubits");
    }
    let n = state.layout().n_parties();
    let dim = 3 * n;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best_lu = LocalUnitary::identity(n);
    let mut best_count = count_zero_amplitudes(psi, opts.zero_threshold);
    let mut best_cost = Sparsity { psi }.cost(&vec![0.0; dim]).unwrap_or(f64::INFINITY);
    for restart in 0..=opts.restarts {
        let start: Vec<f64> = if restart == 0 {
            vec![0.0; dim]
        } else {
            (0..dim).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
        };
        let mut simplex = vec![start.clone()];
        for k in 0..dim {
            let mut v = start.clone();
            v[k] += 0.5;
            simplex.push(v);
        }
        let Ok(nm) = NelderMead::new(simplex).with_sd_tolerance(1e-14) else {
            continue;
        };
        let Ok(res) = Executor::new(Sparsity { psi }, nm)
            .configure(|s| s.max_iters(opts.max_iters))
            .run()
        else {
            continue;
        };
        let Some(x) = res.state.best_param else {
            continue;
        };
        let lu = LocalUnitary::from_flat(&x);
        let out = apply_factors_dagger(psi, &lu.factors());
        let count = count_zero_amplitudes(&out, opts.zero_threshold);
        let cost = res.state.best_cost;
        if count > best_count || (count == best_count && cost < best_cost - 1e-12) {
            best_count = count;
            best_cost = cost;
            best_lu = lu;
        }
    }
    let out = apply_local_unitary(state, &best_lu)?;
    Ok((out, best_lu))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub config: String,
    pub marginals: MarginalReport,
    pub witness_value: f64,
    pub certificate_min_eigenvalue_p: f64,
    pub certificate_min_eigenvalue_q: f64,
    pub certificate_max_residual: f64,
    pub certificate_valid: bool,
    pub uniqueness: Option<Uniqueness>,
    pub noise_robustness: Option<Robustness>,
    /// All marginals PPT (hence separable for qubits), a negative witness
    /// value and a valid certificate.
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    pub ppt_tol: f64,
    pub robustness: bool,
    pub robustness_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            ppt_tol: 1e-9,
            robustness: false,
            robustness_tol: 1e-9,
        }
    }
}

/// Full report for `state` against `config`; reproducible from these inputs.
pub fn certify(
    state: &QuantumState,
    config: &MarginalConfiguration,
    opts: &CertifyOptions,
    solver: &SolverOptions,
) -> Result<CertificationReport> {
    let marginals = check_all_marginals_separable(state, opts.ppt_tol)?;
    let wit = optimal_witness(state, config, solver)?;
    let check: CertificateCheck = wit.certificate.verify(&wit.witness)?;
    let uniqueness = match state.as_pure() {
        Some(_) => Some(uniqueness_check(state, &wit.witness)?),
        None => None,
    };
    let noise_robustness = if opts.robustness {
        Some(noise_robustness(state, config, opts.robustness_tol, solver)?)
    } else {
        None
    };
    Ok(CertificationReport {
        config: config.to_edge_string(),
        certified: marginals.all_pass && marginals.ppt_implies_separable && wit.value < 0.0 && check.valid,
        marginals,
        witness_value: wit.value,
        certificate_min_eigenvalue_p: check.min_eigenvalue_p,
        certificate_min_eigenvalue_q: check.min_eigenvalue_q,
        certificate_max_residual: check.max_residual,
        certificate_valid: check.valid,
        uniqueness,
        noise_robustness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::PartyLayout;

    #[test]
    fn qubit_unitary_is_unitary() {
        let u = qubit_unitary(0.3, -1.2, 0.7);
        assert!((u.adjoint() * &u - CMatrix::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn factorwise_application_matches_dense() {
        let layout = PartyLayout::qubits(3).unwrap();
        let psi = crate::tensor::random_pure_state(&layout, 5);
        let lu = LocalUnitary {
            params: vec![(0.1, 0.2, 0.3), (-0.4, 0.5, 1.1), (2.0, -0.3, 0.9)],
        };
        let fast = apply_local_unitary(&psi, &lu).unwrap();
        let dense = lu.matrix().adjoint() * psi.as_pure().unwrap();
        assert!((fast.as_pure().unwrap() - dense).norm() < 1e-13);
    }
}
