//! Fully decomposable witnesses supported on a marginal configuration, the
//! state optimization against a fixed witness, and the see-saw between them.
//!
//! Witness problem (state `rho` fixed):
//!
//! ```text
//!     min  Tr(W rho)
//!     s.t. W = 1/2^N + sum_k w_k P_k      (P_k Pauli strings on edges of S)
//!          Q_M >= 0,  W - Q_M^{T_M} >= 0  for every bipartition M
//! ```
//!
//! `P_M = W - Q_M^{T_M}` is eliminated, so `Tr(W) = 1` and `W = P_M + Q_M^{T_M}`
//! hold by construction. State problem (witness fixed):
//!
//! ```text
//!     min  Tr(W rho)
//!     s.t. rho >= 0,  Tr(rho) = 1,  (rho_ab)^{T_a} >= 0  for all pairs a < b
//! ```
//!
//! Hermitian matrix variables are parametrized by `D^2` reals (diagonal,
//! real and imaginary parts above the diagonal) and enter the solver through
//! the real symmetric embedding.

use std::collections::BTreeMap;

use gme_sdp::{hermitian_entries, solve, IterateRecord, SdpProblem, SdpSolution, SolveStatus, SolverOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::configurations::MarginalConfiguration;
use crate::error::{invalid, CoreError, Result};
use crate::tensor::{
    eigenvalues, hermitian_eigen, partial_trace, partial_transpose, random_pure_state_from, Bipartition,
    CMatrix, CVector, PartyLayout, PauliString, PauliTerm, QuantumState, StateRepr, C64,
};

/// Pauli terms supported on the edges of `config`. Two-body terms are kept
/// per edge; a single-body direction `sigma_i` on party `a` appears once,
/// attached to the first edge containing `a`.
pub fn witness_terms(config: &MarginalConfiguration) -> Vec<PauliTerm> {
    let mut single_done = vec![[false; 4]; config.n_parties];
    let mut out = Vec::new();
    for &(a, b) in &config.edges {
        for i in 0..4u8 {
            for j in 0..4u8 {
                if i == 0 && j == 0 {
                    continue;
                }
                if i == 0 || j == 0 {
                    let (party, k) = if i == 0 { (b, j) } else { (a, i) };
                    if single_done[party][k as usize] {
                        continue;
                    }
                    single_done[party][k as usize] = true;
                }
                out.push(PauliTerm {
                    edge: (a, b),
                    indices: (i, j),
                });
            }
        }
    }
    out
}

fn term_string(n: usize, t: &PauliTerm) -> PauliString {
    let mut factors = Vec::with_capacity(2);
    if t.indices.0 != 0 {
        factors.push((t.edge.0, t.indices.0));
    }
    if t.indices.1 != 0 {
        factors.push((t.edge.1, t.indices.1));
    }
    PauliString::new(n, &factors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub layout: PartyLayout,
    pub config: MarginalConfiguration,
    pub identity_coeff: f64,
    pub coeffs: BTreeMap<PauliTerm, f64>,
}

impl Witness {
    /// `1/2^N` times the identity.
    pub fn trivial(layout: &PartyLayout, config: &MarginalConfiguration) -> Self {
        Self {
            layout: layout.clone(),
            config: config.clone(),
            identity_coeff: 1.0 / layout.total_dim() as f64,
            coeffs: witness_terms(config).into_iter().map(|t| (t, 0.0)).collect(),
        }
    }
}

pub fn expand_witness(w: &Witness) -> CMatrix {
    let n = w.layout.n_parties();
    let d = w.layout.total_dim();
    let mut m = CMatrix::identity(d, d) * C64::from(w.identity_coeff);
    for (t, &c) in &w.coeffs {
        if c == 0.0 {
            continue;
        }
        let p = term_string(n, t);
        for (a, ph) in p.phases.iter().enumerate() {
            m[(a, a ^ p.flip)] += ph * c;
        }
    }
    m
}

/// Coefficients of `m` on the witness terms of `config` and on the
/// identity, by Hilbert-Schmidt projection.
pub fn project_on_terms(m: &CMatrix, config: &MarginalConfiguration) -> (f64, BTreeMap<PauliTerm, f64>) {
    let d = m.nrows();
    let n = d.trailing_zeros() as usize;
    let id = m.trace().re / d as f64;
    let coeffs = witness_terms(config)
        .into_iter()
        .map(|t| {
            let c = term_string(n, &t).trace_with(m).re / d as f64;
            (t, c)
        })
        .collect();
    (id, coeffs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionCertificate {
    /// `(M, P_M, Q_M)` for every canonical bipartition.
    pub parts: Vec<(Bipartition, CMatrix, CMatrix)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateCheck {
    pub min_eigenvalue_p: f64,
    pub min_eigenvalue_q: f64,
    /// Largest operator norm of `W - P_M - Q_M^{T_M}`.
    pub max_residual: f64,
    pub bipartitions: usize,
    pub valid: bool,
}

impl DecompositionCertificate {
    /// Recomputes `P_M, Q_M >= 0` and `W = P_M + Q_M^{T_M}` with dense
    /// linear algebra, independent of how the certificate was produced.
    pub fn verify(&self, witness: &Witness) -> Result<CertificateCheck> {
        let w = expand_witness(witness);
        let layout = &witness.layout;
        let expected = Bipartition::all(layout.n_parties())?;
        let mut seen: Vec<Bipartition> = self.parts.iter().map(|p| p.0).collect();
        seen.sort();
        let mut min_p = f64::INFINITY;
        let mut min_q = f64::INFINITY;
        let mut max_res: f64 = 0.0;
        for (m, p, q) in &self.parts {
            min_p = min_p.min(eigenvalues(p)?[0]);
            min_q = min_q.min(eigenvalues(q)?[0]);
            let qt = partial_transpose(layout, q, &m.members())?;
            let r = &w - p - qt;
            let e = eigenvalues(&crate::tensor::hermitian_part(&r))?;
            max_res = max_res.max(e[0].abs()).max(e[e.len() - 1].abs());
        }
        let complete = seen == expected;
        Ok(CertificateCheck {
            min_eigenvalue_p: min_p,
            min_eigenvalue_q: min_q,
            max_residual: max_res,
            bipartitions: self.parts.len(),
            valid: complete && min_p >= -1e-8 && min_q >= -1e-8 && max_res <= 1e-7,
        })
    }
}

/// Parametrization of a Hermitian `d x d` matrix by `d^2` reals.
#[derive(Debug, Clone, Copy)]
enum Param {
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
}

fn hermitian_params(d: usize) -> Vec<Param> {
    let mut out = Vec::with_capacity(d * d);
    for a in 0..d {
        out.push(Param::Diag(a));
    }
    for a in 0..d {
        for b in (a + 1)..d {
            out.push(Param::Re(a, b));
            out.push(Param::Im(a, b));
        }
    }
    out
}

impl Param {
    /// `(a, b, v)` with the parameter standing for `v|a><b| + h.c.` (or
    /// `|a><a|` on the diagonal).
    fn element(self) -> (usize, usize, C64) {
        match self {
            Param::Diag(a) => (a, a, C64::from(1.0)),
            Param::Re(a, b) => (a, b, C64::from(1.0)),
            Param::Im(a, b) => (a, b, C64::i()),
        }
    }
}

fn assemble_hermitian(d: usize, params: &[Param], x: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    for (p, &v) in params.iter().zip(x) {
        let (a, b, unit) = p.element();
        if a == b {
            m[(a, a)] += C64::from(v);
        } else {
            m[(a, b)] += unit * v;
            m[(b, a)] += unit.conj() * v;
        }
    }
    m
}

/// Partial transpose of `|a><b|` on the qubits in `mask` (bit `n-1-p` for party `p`).
fn swap_digits(a: usize, b: usize, mask: usize) -> (usize, usize) {
    ((a & !mask) | (b & mask), (b & !mask) | (a & mask))
}

fn party_mask(n: usize, parties: &[usize]) -> usize {
    parties.iter().fold(0, |m, &p| m | 1 << (n - 1 - p))
}

fn require_qubits(layout: &PartyLayout, config: &MarginalConfiguration) -> Result<()> {
    if !layout.is_qubits() {
        return Err(CoreError::Unsupported("witness search needs a qubit layout".into()));
    }
    if layout.n_parties() < 2 {
        return invalid("witness search needs at least two parties");
    }
    if config.n_parties != layout.n_parties() {
        return invalid("configuration and layout disagree on the number of parties");
    }
    let v = config.is_valid();
    if !v.valid {
        return invalid(format!("configuration is not valid: {}", v.reason.unwrap_or_default()));
    }
    Ok(())
}

fn check_solution(sol: &SdpSolution, what: &str) -> Result<()> {
    match sol.status {
        SolveStatus::Optimal => Ok(()),
        s => Err(CoreError::Solver(gme_sdp::SdpError::SolverFailure {
            iteration: sol.iterations,
            reason: format!("{what} problem ended with status {s}"),
            pres: sol.history.last().map_or(f64::NAN, |h| h.primal_residual),
            dres: sol.history.last().map_or(f64::NAN, |h| h.dual_residual),
            gap: sol.gap,
        })),
    }
}

/// Expectation values `Re Tr(P rho)` of Pauli strings.
fn pauli_expectations(state: &QuantumState, strings: &[PauliString]) -> Vec<f64> {
    match state.repr() {
        StateRepr::Pure(v) => strings
            .iter()
            .map(|p| {
                p.phases
                    .iter()
                    .enumerate()
                    .map(|(a, ph)| v[a].conj() * ph * v[a ^ p.flip])
                    .sum::<C64>()
                    .re
            })
            .collect(),
        StateRepr::Mixed(m) => strings.iter().map(|p| p.trace_with(m).re).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct WitnessResult {
    pub witness: Witness,
    pub certificate: DecompositionCertificate,
    /// `Tr(W rho)`; negative proves `rho` is not a PPT mixture.
    pub value: f64,
    pub solver_iterations: usize,
    pub duality_gap: f64,
    pub solver_history: Vec<IterateRecord>,
}

/// Upper bound on the interior-point Schur storage of one witness solve.
pub const MAX_SCHUR_BYTES: f64 = 2.0 * (1u64 << 30) as f64;

/// The witness problem as an SDP, for inspection or export.
pub struct WitnessProblem {
    pub problem: SdpProblem,
    pub terms: Vec<PauliTerm>,
    bipartitions: Vec<Bipartition>,
    params: Vec<Param>,
    dim: usize,
}

impl WitnessProblem {
    pub fn new(layout: &PartyLayout, config: &MarginalConfiguration, state: &QuantumState) -> Result<Self> {
        require_qubits(layout, config)?;
        if state.layout() != layout {
            return invalid("state layout differs from the witness layout");
        }
        let n = layout.n_parties();
        let d = layout.total_dim();
        let nb_all = (1usize << (n - 1)) - 1;
        // one dense D^2 x D^2 Schur block per bipartition
        let schur_bytes = nb_all as f64 * (d * d) as f64 * (d * d) as f64 * 8.0;
        if schur_bytes > MAX_SCHUR_BYTES {
            return Err(CoreError::ResourceLimit(format!(
                "witness SDP for {n} qubits needs ~{:.1} GiB of Schur storage",
                schur_bytes / f64::from(1u32 << 30)
            )));
        }
        let terms = witness_terms(config);
        let strings: Vec<PauliString> = terms.iter().map(|t| term_string(n, t)).collect();
        let bipartitions = Bipartition::all(n)?;
        let params = hermitian_params(d);
        let nb = bipartitions.len();
        let mut p = SdpProblem::new(vec![2 * d; 2 * nb]);

        for (s, cost) in strings.iter().zip(pauli_expectations(state, &strings)) {
            let var = p.add_variable(cost);
            for a in 0..d {
                let b = a ^ s.flip;
                if a > b {
                    continue;
                }
                for (r, c, v) in hermitian_entries(d, a, b, s.phases[a]) {
                    for m in 0..nb {
                        p.add_entry(var, 2 * m + 1, r, c, v);
                    }
                }
            }
        }
        for m in 0..nb {
            for i in 0..2 * d {
                p.add_constant_entry(2 * m + 1, i, i, 1.0 / d as f64);
            }
        }
        for (m, bip) in bipartitions.iter().enumerate() {
            let mask = party_mask(n, &bip.members());
            for param in &params {
                let var = p.add_variable(0.0);
                let (a, b, unit) = param.element();
                for (r, c, v) in hermitian_entries(d, a, b, unit) {
                    p.add_entry(var, 2 * m, r, c, v);
                }
                let (a2, b2) = swap_digits(a, b, mask);
                for (r, c, v) in hermitian_entries(d, a2, b2, -unit) {
                    p.add_entry(var, 2 * m + 1, r, c, v);
                }
            }
        }
        Ok(Self {
            problem: p,
            terms,
            bipartitions,
            params,
            dim: d,
        })
    }

    fn extract(
        &self,
        layout: &PartyLayout,
        config: &MarginalConfiguration,
        x: &[f64],
    ) -> Result<(Witness, DecompositionCertificate)> {
        let nt = self.terms.len();
        let witness = Witness {
            layout: layout.clone(),
            config: config.clone(),
            identity_coeff: 1.0 / self.dim as f64,
            coeffs: self.terms.iter().copied().zip(x[..nt].iter().copied()).collect(),
        };
        let w = expand_witness(&witness);
        let np = self.params.len();
        let mut parts = Vec::with_capacity(self.bipartitions.len());
        for (m, bip) in self.bipartitions.iter().enumerate() {
            let start = nt + m * np;
            let q = assemble_hermitian(self.dim, &self.params, &x[start..start + np]);
            let p = &w - partial_transpose(layout, &q, &bip.members())?;
            parts.push((*bip, p, q));
        }
        Ok((witness, DecompositionCertificate { parts }))
    }
}

/// Optimal fully decomposable witness for `state` built from the marginals
/// in `config`. Pure states are used as given; mixed ones through their
/// density matrix.
pub fn optimal_witness(
    state: &QuantumState,
    config: &MarginalConfiguration,
    opts: &SolverOptions,
) -> Result<WitnessResult> {
    let layout = state.layout().clone();
    let wp = WitnessProblem::new(&layout, config, state)?;
    let sol = solve(&wp.problem, opts)?;
    check_solution(&sol, "witness")?;
    let (witness, certificate) = wp.extract(&layout, config, &sol.x)?;
    let value = state.expectation(&expand_witness(&witness));
    Ok(WitnessResult {
        witness,
        certificate,
        value,
        solver_iterations: sol.iterations,
        duality_gap: sol.gap,
        solver_history: sol.history,
    })
}

#[derive(Debug, Clone)]
pub struct StateResult {
    pub state: QuantumState,
    pub value: f64,
    pub solver_iterations: usize,
    pub solver_history: Vec<IterateRecord>,
}

/// The state problem as an SDP.
pub struct StateProblem {
    pub problem: SdpProblem,
    params: Vec<Param>,
    dim: usize,
}

impl StateProblem {
    pub fn new(witness: &Witness) -> Result<Self> {
        let layout = &witness.layout;
        require_qubits(layout, &witness.config)?;
        let n = layout.n_parties();
        let d = layout.total_dim();
        let w = expand_witness(witness);
        let params = hermitian_params(d);
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .collect();
        let mut blocks = vec![2 * d];
        blocks.extend(std::iter::repeat_n(8, pairs.len()));
        let mut p = SdpProblem::new(blocks);
        let mut diag_vars = Vec::with_capacity(d);
        for param in &params {
            let (a, b, unit) = param.element();
            let cost = match param {
                Param::Diag(_) => w[(a, a)].re,
                Param::Re(..) => 2.0 * w[(a, b)].re,
                Param::Im(..) => 2.0 * w[(a, b)].im,
            };
            let var = p.add_variable(cost);
            if a == b {
                diag_vars.push((var, 1.0));
            }
            for (r, c, v) in hermitian_entries(d, a, b, unit) {
                p.add_entry(var, 0, r, c, v);
            }
            for (k, &(alpha, beta)) in pairs.iter().enumerate() {
                let (sa, sb) = (n - 1 - alpha, n - 1 - beta);
                let others = (d - 1) & !(1 << sa) & !(1 << sb);
                if (a ^ b) & others != 0 {
                    continue;
                }
                let digit = |x: usize, s: usize| (x >> s) & 1;
                // marginal |la><lb| with alpha the high bit, then transpose alpha
                let la = digit(b, sa) << 1 | digit(a, sb);
                let lb = digit(a, sa) << 1 | digit(b, sb);
                for (r, c, v) in hermitian_entries(4, la, lb, unit) {
                    p.add_entry(var, 1 + k, r, c, v);
                }
            }
        }
        p.add_equality(diag_vars, 1.0);
        Ok(Self {
            problem: p,
            params,
            dim: d,
        })
    }
}

/// Clips eigenvalues below zero and renormalizes the trace.
fn nearest_density_matrix(rho: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = hermitian_eigen(rho)?;
    if vals[0] >= 0.0 {
        let tr = rho.trace().re;
        return Ok(crate::tensor::hermitian_part(rho) / C64::from(tr));
    }
    let clipped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
    for (k, &v) in clipped.iter().enumerate() {
        if v > 0.0 {
            let col = vecs.column(k);
            out += (&col * col.adjoint()) * C64::from(v / total);
        }
    }
    Ok(crate::tensor::hermitian_part(&out))
}

/// Optimal state against a fixed witness with every two-body marginal PPT.
pub fn optimal_state(witness: &Witness, opts: &SolverOptions) -> Result<StateResult> {
    let sp = StateProblem::new(witness)?;
    let sol = solve(&sp.problem, opts)?;
    check_solution(&sol, "state")?;
    let rho = assemble_hermitian(sp.dim, &sp.params, &sol.x);
    let rho = nearest_density_matrix(&rho)?;
    let state = QuantumState::mixed(witness.layout.clone(), rho)?;
    let value = state.expectation(&expand_witness(witness));
    Ok(StateResult {
        state,
        value,
        solver_iterations: sol.iterations,
        solver_history: sol.history,
    })
}

/// Smallest PT eigenvalue over all two-body marginals.
pub fn min_marginal_pt_eigenvalue(state: &QuantumState) -> Result<f64> {
    let n = state.layout().n_parties();
    let mut min = f64::INFINITY;
    for a in 0..n {
        for b in (a + 1)..n {
            let m = partial_trace(state, &[a, b])?;
            let sub = state.layout().subsystem(&[a, b])?;
            let pt = partial_transpose(&sub, &m, &[0])?;
            min = min.min(eigenvalues(&pt)?[0]);
        }
    }
    Ok(min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeeSawOptions {
    pub seed: u64,
    pub max_iters: usize,
    pub conv_tol: f64,
    pub purify_tol: f64,
    /// PPT tolerance for the final marginal check.
    pub ppt_tol: f64,
}

impl Default for SeeSawOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            max_iters: 20,
            conv_tol: 1e-8,
            purify_tol: 1e-6,
            ppt_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchChecks {
    pub negative_value: bool,
    pub marginals_ppt: bool,
    pub min_marginal_pt_eigenvalue: f64,
    pub certificate_valid: bool,
}

impl SearchChecks {
    pub fn all_pass(&self) -> bool {
        self.negative_value && self.marginals_ppt && self.certificate_valid
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub state: QuantumState,
    pub witness: Witness,
    pub certificate: DecompositionCertificate,
    /// Witness value of the random start, which need not have PPT marginals.
    pub initial_value: f64,
    /// `Tr(W rho)` after every half step from the first state step on;
    /// non-increasing up to solver slack.
    pub objective_trace: Vec<f64>,
    /// Completed witness-then-state sweeps.
    pub iterations: usize,
    pub status: SearchStatus,
    pub value: f64,
    pub checks: SearchChecks,
    /// Random draws rejected for near-symmetric marginals.
    pub rejected_starts: usize,
    /// Iterate records of every SDP solved, in order.
    pub solver_histories: Vec<Vec<IterateRecord>>,
}

/// Largest deviation of a two-body marginal from its image under party swap.
fn max_marginal_asymmetry(state: &QuantumState) -> Result<f64> {
    let n = state.layout().n_parties();
    let swap = |m: &CMatrix| {
        let perm = [0usize, 2, 1, 3];
        CMatrix::from_fn(4, 4, |r, c| m[(perm[r], perm[c])])
    };
    let mut min_dev = f64::INFINITY;
    for a in 0..n {
        for b in (a + 1)..n {
            let m = partial_trace(state, &[a, b])?;
            min_dev = min_dev.min((&m - swap(&m)).norm());
        }
    }
    Ok(min_dev)
}

/// Random pure start whose two-body marginals are all at least 1e-6 away
/// from swap-symmetric ones; returns the state and the number of rejects.
pub fn seeded_start(layout: &PartyLayout, seed: u64) -> Result<(QuantumState, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for rejected in 0..1000 {
        let s = random_pure_state_from(layout, &mut rng);
        if max_marginal_asymmetry(&s)? >= 1e-6 {
            return Ok((s, rejected));
        }
    }
    invalid("no asymmetric random start found")
}

/// Dominant eigenvector of `rho` if the second eigenvalue is below `tol`,
/// mixed with the least white noise that keeps every marginal PPT.
fn purify(rho: &QuantumState, tol: f64) -> Result<Option<QuantumState>> {
    let StateRepr::Mixed(m) = rho.repr() else {
        return Ok(None);
    };
    let (vals, vecs) = hermitian_eigen(m)?;
    let k = vals.len();
    if k < 2 || vals[k - 2] >= tol {
        return Ok(None);
    }
    let v: CVector = vecs.column(k - 1).into_owned();
    let pure = QuantumState::pure(rho.layout().clone(), v)?;
    let lambda = min_marginal_pt_eigenvalue(&pure)?;
    if lambda >= 0.0 {
        return Ok(Some(pure));
    }
    // (1 - e) lambda + e / 4 = 0 for a two-qubit marginal mixed with 1/4.
    let eps = -lambda / (0.25 - lambda);
    let d = rho.layout().total_dim();
    let mixed = pure.density_matrix() * C64::from(1.0 - eps) + CMatrix::identity(d, d) * C64::from(eps / d as f64);
    Ok(Some(QuantumState::mixed(rho.layout().clone(), mixed)?))
}

/// Alternates the witness and state problems from a seeded random pure
/// state until the witness value changes by less than `conv_tol`.
pub fn see_saw(
    layout: &PartyLayout,
    config: &MarginalConfiguration,
    opts: &SeeSawOptions,
    solver: &SolverOptions,
) -> Result<SearchResult> {
    require_qubits(layout, config)?;
    let (mut state, rejected_starts) = seeded_start(layout, opts.seed)?;
    let mut trace = Vec::new();
    let mut wit = optimal_witness(&state, config, solver)?;
    let mut histories = vec![wit.solver_history.clone()];
    let initial_value = wit.value;
    let mut iterations = 0;
    let mut status = SearchStatus::MaxIterations;
    while iterations < opts.max_iters {
        let next = optimal_state(&wit.witness, solver)?;
        histories.push(next.solver_history.clone());
        let (candidate, value) = match purify(&next.state, opts.purify_tol)? {
            Some(p) => {
                let v = p.expectation(&expand_witness(&wit.witness));
                (p, v)
            }
            None => (next.state, next.value),
        };
        let new_wit = optimal_witness(&candidate, config, solver)?;
        histories.push(new_wit.solver_history.clone());
        iterations += 1;
        trace.push(value);
        trace.push(new_wit.value);
        let delta = (wit.value - new_wit.value).abs();
        state = candidate;
        wit = new_wit;
        if delta < opts.conv_tol {
            status = SearchStatus::Converged;
            break;
        }
    }
    let check = wit.certificate.verify(&wit.witness)?;
    let min_pt = min_marginal_pt_eigenvalue(&state)?;
    let checks = SearchChecks {
        negative_value: wit.value < 0.0,
        marginals_ppt: min_pt >= -opts.ppt_tol,
        min_marginal_pt_eigenvalue: min_pt,
        certificate_valid: check.valid,
    };
    Ok(SearchResult {
        value: wit.value,
        state,
        witness: wit.witness,
        certificate: wit.certificate,
        initial_value,
        objective_trace: trace,
        iterations,
        status,
        checks,
        rejected_starts,
        solver_histories: histories,
    })
}

/// Witness file contents: configuration, coefficient table and metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessFile {
    pub n_parties: usize,
    pub edges: Vec<(usize, usize)>,
    pub identity_coeff: f64,
    /// `(alpha, beta, i, j, value)`.
    pub coeffs: Vec<(usize, usize, u8, u8, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_min_eigenvalue_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_min_eigenvalue_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_max_residual: Option<f64>,
}

impl WitnessFile {
    pub fn new(w: &Witness, value: Option<f64>, check: Option<&CertificateCheck>) -> Self {
        Self {
            n_parties: w.layout.n_parties(),
            edges: w.config.edges.clone(),
            identity_coeff: w.identity_coeff,
            coeffs: w
                .coeffs
                .iter()
                .map(|(t, &c)| (t.edge.0, t.edge.1, t.indices.0, t.indices.1, c))
                .collect(),
            value,
            certificate_min_eigenvalue_p: check.map(|c| c.min_eigenvalue_p),
            certificate_min_eigenvalue_q: check.map(|c| c.min_eigenvalue_q),
            certificate_max_residual: check.map(|c| c.max_residual),
        }
    }

    pub fn to_witness(&self) -> Result<Witness> {
        let config = MarginalConfiguration::new(self.n_parties, &self.edges)?;
        let layout = PartyLayout::qubits(self.n_parties)?;
        let allowed: std::collections::BTreeSet<PauliTerm> = witness_terms(&config).into_iter().collect();
        let mut coeffs = BTreeMap::new();
        for &(a, b, i, j, c) in &self.coeffs {
            let t = PauliTerm {
                edge: (a, b),
                indices: (i, j),
            };
            if !allowed.contains(&t) {
                return invalid(format!("term ({a},{b},{i},{j}) is not a witness term of the configuration"));
            }
            coeffs.insert(t, c);
        }
        Ok(Witness {
            layout,
            config,
            identity_coeff: self.identity_coeff,
            coeffs,
        })
    }
}
