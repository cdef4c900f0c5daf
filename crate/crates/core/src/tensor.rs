//! Dense linear algebra over multi-party Hilbert spaces.
//!
//! Index convention: party 0 is the most significant tensor factor, so for
//! dims `(d_0, ..., d_{n-1})` the basis state `|i_0 ... i_{n-1}>` sits at
//! `sum_k i_k * prod_{l > k} d_l`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, CoreError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartyLayout {
    dims: Vec<usize>,
}

impl PartyLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return invalid("layout needs at least one party");
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return invalid(format!("local dimension {d} < 2"));
        }
        let total = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if total.is_none() {
            return Err(CoreError::ResourceLimit("total dimension overflows".into()));
        }
        Ok(Self { dims })
    }

    pub fn qubits(n: usize) -> Result<Self> {
        Self::new(vec![2; n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_parties(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_qubits(&self) -> bool {
        self.dims.iter().all(|&d| d == 2)
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    pub fn subsystem(&self, parties: &[usize]) -> Result<PartyLayout> {
        check_parties(self, parties)?;
        PartyLayout::new(parties.iter().map(|&p| self.dims[p]).collect())
    }

    /// For every basis index, its index within the `parties` factor and
    /// within the complementary factor (both in increasing party order).
    fn split_indices(&self, parties: &[usize]) -> (Vec<usize>, Vec<usize>, usize, usize) {
        let n = self.n_parties();
        let mut inside = vec![false; n];
        for &p in parties {
            inside[p] = true;
        }
        let strides = self.strides();
        let mut a_stride = vec![0; n];
        let mut b_stride = vec![0; n];
        let (mut da, mut db) = (1, 1);
        for k in (0..n).rev() {
            if inside[k] {
                a_stride[k] = da;
                da *= self.dims[k];
            } else {
                b_stride[k] = db;
                db *= self.dims[k];
            }
        }
        let total = self.total_dim();
        let mut ia = vec![0; total];
        let mut ib = vec![0; total];
        for idx in 0..total {
            let (mut a, mut b) = (0, 0);
            for k in 0..n {
                let digit = (idx / strides[k]) % self.dims[k];
                a += digit * a_stride[k];
                b += digit * b_stride[k];
            }
            ia[idx] = a;
            ib[idx] = b;
        }
        (ia, ib, da, db)
    }
}

fn check_parties(layout: &PartyLayout, parties: &[usize]) -> Result<()> {
    let mut seen = vec![false; layout.n_parties()];
    for &p in parties {
        if p >= layout.n_parties() {
            return invalid(format!("party {p} out of range for {} parties", layout.n_parties()));
        }
        if seen[p] {
            return invalid(format!("party {p} listed twice"));
        }
        seen[p] = true;
    }
    Ok(())
}

fn sorted_parties(layout: &PartyLayout, parties: &[usize]) -> Result<Vec<usize>> {
    check_parties(layout, parties)?;
    let mut v = parties.to_vec();
    v.sort_unstable();
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateRepr {
    Pure(CVector),
    Mixed(CMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    layout: PartyLayout,
    repr: StateRepr,
}

impl QuantumState {
    /// Normalized pure state.
    pub fn pure(layout: PartyLayout, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return invalid(format!(
                "{} amplitudes for total dimension {}",
                amplitudes.len(),
                layout.total_dim()
            ));
        }
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return invalid("state vector has zero or non-finite norm");
        }
        Ok(Self {
            layout,
            repr: StateRepr::Pure(amplitudes.unscale(norm)),
        })
    }

    /// Density matrix; Hermitian within 1e-12 (then symmetrized), unit
    /// trace within 1e-12 and minimum eigenvalue at least -1e-9.
    pub fn mixed(layout: PartyLayout, rho: CMatrix) -> Result<Self> {
        let d = layout.total_dim();
        if rho.nrows() != d || rho.ncols() != d {
            return invalid(format!("density matrix is not {d}x{d}"));
        }
        if hermiticity_defect(&rho) > 1e-12 {
            return invalid("density matrix is not Hermitian");
        }
        let rho = hermitian_part(&rho);
        let tr = rho.trace().re;
        if (tr - 1.0).abs() > 1e-12 {
            return invalid(format!("density matrix has trace {tr}"));
        }
        let min = min_eigenvalue(&rho)?;
        if min < -1e-9 {
            return invalid(format!("density matrix has eigenvalue {min:.3e}"));
        }
        Ok(Self {
            layout,
            repr: StateRepr::Mixed(rho),
        })
    }

    pub fn layout(&self) -> &PartyLayout {
        &self.layout
    }

    pub fn repr(&self) -> &StateRepr {
        &self.repr
    }

    pub fn as_pure(&self) -> Option<&CVector> {
        match &self.repr {
            StateRepr::Pure(v) => Some(v),
            StateRepr::Mixed(_) => None,
        }
    }

    pub fn density_matrix(&self) -> CMatrix {
        match &self.repr {
            StateRepr::Pure(v) => v * v.adjoint(),
            StateRepr::Mixed(m) => m.clone(),
        }
    }

    /// `Tr(O rho)` for Hermitian `O`.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        match &self.repr {
            StateRepr::Pure(v) => v.dotc(&(op * v)).re,
            StateRepr::Mixed(m) => (op * m).trace().re,
        }
    }

    pub fn purity(&self) -> f64 {
        match &self.repr {
            StateRepr::Pure(_) => 1.0,
            StateRepr::Mixed(m) => (m * m).trace().re,
        }
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
/// Asymmetry up to 1e-10 is symmetrized away; more is rejected.
pub fn hermitian_eigen(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if hermiticity_defect(m) > 1e-10 * max_abs(m).max(1.0) {
        return invalid("matrix is not Hermitian");
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Ok((values, vectors))
}

pub fn eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    if hermiticity_defect(m) > 1e-10 * max_abs(m).max(1.0) {
        return invalid("matrix is not Hermitian");
    }
    let mut v: Vec<f64> = hermitian_part(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn min_eigenvalue(m: &CMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?[0])
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Reduced density matrix on `keep`, parties in increasing order.
pub fn partial_trace(state: &QuantumState, keep: &[usize]) -> Result<CMatrix> {
    if keep.is_empty() {
        return invalid("keep set is empty");
    }
    let keep = sorted_parties(&state.layout, keep)?;
    let (ia, ib, da, db) = state.layout.split_indices(&keep);
    match &state.repr {
        StateRepr::Pure(v) => {
            let mut psi = CMatrix::zeros(da, db);
            for (idx, amp) in v.iter().enumerate() {
                psi[(ia[idx], ib[idx])] = *amp;
            }
            Ok(&psi * psi.adjoint())
        }
        StateRepr::Mixed(m) => Ok(trace_out(m, &ia, &ib, da)),
    }
}

/// Partial trace of an arbitrary matrix over `layout`.
pub fn partial_trace_matrix(layout: &PartyLayout, m: &CMatrix, keep: &[usize]) -> Result<CMatrix> {
    if keep.is_empty() {
        return invalid("keep set is empty");
    }
    check_square(layout, m)?;
    let keep = sorted_parties(layout, keep)?;
    let (ia, ib, da, _) = layout.split_indices(&keep);
    Ok(trace_out(m, &ia, &ib, da))
}

fn trace_out(m: &CMatrix, ia: &[usize], ib: &[usize], da: usize) -> CMatrix {
    let mut out = CMatrix::zeros(da, da);
    let d = m.nrows();
    for r in 0..d {
        for c in 0..d {
            if ib[r] == ib[c] {
                out[(ia[r], ia[c])] += m[(r, c)];
            }
        }
    }
    out
}

fn check_square(layout: &PartyLayout, m: &CMatrix) -> Result<()> {
    let d = layout.total_dim();
    if m.nrows() != d || m.ncols() != d {
        return invalid(format!("matrix is {}x{}, layout needs {d}x{d}", m.nrows(), m.ncols()));
    }
    Ok(())
}

/// Index permutation realizing the partial transpose on `subset`:
/// `out[(r, c)] = m[(swap(r, c).0, swap(r, c).1)]`.
fn transpose_map(layout: &PartyLayout, subset: &[usize]) -> impl Fn(usize, usize) -> (usize, usize) {
    let strides = layout.strides();
    let parts: Vec<(usize, usize)> = subset
        .iter()
        .map(|&p| (strides[p], layout.dims()[p]))
        .collect();
    move |r, c| {
        let (mut r2, mut c2) = (r, c);
        for &(s, d) in &parts {
            let dr = (r / s) % d;
            let dc = (c / s) % d;
            r2 = r2 - dr * s + dc * s;
            c2 = c2 - dc * s + dr * s;
        }
        (r2, c2)
    }
}

/// Transposition of the tensor factors in `subset`.
pub fn partial_transpose(layout: &PartyLayout, m: &CMatrix, subset: &[usize]) -> Result<CMatrix> {
    check_square(layout, m)?;
    let subset = sorted_parties(layout, subset)?;
    let map = transpose_map(layout, &subset);
    let d = m.nrows();
    Ok(CMatrix::from_fn(d, d, |r, c| {
        let (r2, c2) = map(r, c);
        m[(r2, c2)]
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PptCheck {
    pub ppt: bool,
    pub min_eigenvalue: f64,
}

/// PPT test across `bipartition`; true iff the smallest eigenvalue of the
/// partial transpose is at least `-tol`.
pub fn is_ppt(layout: &PartyLayout, m: &CMatrix, bipartition: &Bipartition, tol: f64) -> Result<PptCheck> {
    if tol < 0.0 {
        return invalid("tolerance must be non-negative");
    }
    if bipartition.n_parties() != layout.n_parties() {
        return invalid("bipartition and layout disagree on the number of parties");
    }
    check_square(layout, m)?;
    if hermiticity_defect(m) > 1e-10 {
        return invalid("matrix is not Hermitian");
    }
    let pt = partial_transpose(layout, &hermitian_part(m), &bipartition.members())?;
    let min = min_eigenvalue(&pt)?;
    Ok(PptCheck {
        ppt: min >= -tol,
        min_eigenvalue: min,
    })
}

/// Unordered bipartition `M | complement`, stored with party 0 in `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bipartition {
    n: usize,
    mask: u64,
}

impl Bipartition {
    pub fn new(n_parties: usize, members: &[usize]) -> Result<Self> {
        if n_parties < 2 || n_parties > 63 {
            return invalid(format!("cannot bipartition {n_parties} parties"));
        }
        let mut mask = 0u64;
        for &p in members {
            if p >= n_parties {
                return invalid(format!("party {p} out of range"));
            }
            mask |= 1 << p;
        }
        let full = (1u64 << n_parties) - 1;
        if mask == 0 || mask == full {
            return invalid("bipartition side must be non-empty and proper");
        }
        if mask & 1 == 0 {
            mask = full & !mask;
        }
        Ok(Self { n: n_parties, mask })
    }

    /// All `2^(n-1) - 1` canonical bipartitions.
    pub fn all(n_parties: usize) -> Result<Vec<Self>> {
        if n_parties < 2 || n_parties > 63 {
            return invalid(format!("cannot bipartition {n_parties} parties"));
        }
        let full = (1u64 << n_parties) - 1;
        Ok((0..(1u64 << (n_parties - 1)))
            .map(|rest| 1 | (rest << 1))
            .filter(|&m| m != full)
            .map(|mask| Self { n: n_parties, mask })
            .collect())
    }

    pub fn n_parties(&self) -> usize {
        self.n
    }

    pub fn contains(&self, party: usize) -> bool {
        party < self.n && self.mask >> party & 1 == 1
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.n).filter(|&p| self.contains(p)).collect()
    }

    pub fn complement(&self) -> Vec<usize> {
        (0..self.n).filter(|&p| !self.contains(p)).collect()
    }
}

impl std::fmt::Display for Bipartition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let side = |v: Vec<usize>| v.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "{}|{}", side(self.members()), side(self.complement()))
    }
}

pub fn pauli_matrix(i: u8) -> CMatrix {
    let im = C64::new(0.0, 1.0);
    match i {
        0 => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ONE]),
        1 => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        2 => CMatrix::from_row_slice(2, 2, &[ZERO, -im, im, ZERO]),
        3 => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        _ => panic!("Pauli index {i} out of range"),
    }
}

/// `sigma_i` on party `alpha` and `sigma_j` on party `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliTerm {
    pub edge: (usize, usize),
    pub indices: (u8, u8),
}

/// Single-row sparse form of a Pauli string on `n` qubits: row `a` has its
/// only nonzero at column `a ^ flip` with value `phase(a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    pub flip: usize,
    pub phases: Vec<C64>,
}

impl PauliString {
    /// Tensor product of `sigma_i` on each listed (distinct) qubit.
    pub fn new(n_qubits: usize, factors: &[(usize, u8)]) -> Self {
        let dim = 1usize << n_qubits;
        let mut flip = 0;
        for &(q, i) in factors {
            assert!(q < n_qubits && i < 4, "Pauli factor ({q}, {i}) out of range");
            if i == 1 || i == 2 {
                flip |= 1 << (n_qubits - 1 - q);
            }
        }
        let mats: Vec<(usize, CMatrix)> = factors
            .iter()
            .map(|&(q, i)| (n_qubits - 1 - q, pauli_matrix(i)))
            .collect();
        let phases = (0..dim)
            .map(|a| {
                let b = a ^ flip;
                mats.iter()
                    .map(|(shift, p)| p[((a >> shift) & 1, (b >> shift) & 1)])
                    .product()
            })
            .collect();
        Self { flip, phases }
    }

    pub fn to_dense(&self) -> CMatrix {
        let d = self.phases.len();
        let mut m = CMatrix::zeros(d, d);
        for (a, ph) in self.phases.iter().enumerate() {
            m[(a, a ^ self.flip)] = *ph;
        }
        m
    }

    /// `Tr(P M)`.
    pub fn trace_with(&self, m: &CMatrix) -> C64 {
        self.phases
            .iter()
            .enumerate()
            .map(|(a, ph)| ph * m[(a ^ self.flip, a)])
            .sum()
    }
}

pub fn pauli_operator(term: &PauliTerm, layout: &PartyLayout) -> Result<CMatrix> {
    let (a, b) = term.edge;
    let n = layout.n_parties();
    if a >= n || b >= n || a == b {
        return invalid(format!("edge ({a}, {b}) invalid for {n} parties"));
    }
    if layout.dims()[a] != 2 || layout.dims()[b] != 2 {
        return Err(CoreError::InvalidArgument(format!(
            "edge ({a}, {b}) touches a non-qubit party"
        )));
    }
    if term.indices.0 > 3 || term.indices.1 > 3 {
        return invalid("Pauli index out of range");
    }
    let mut out = CMatrix::from_element(1, 1, ONE);
    for (p, &d) in layout.dims().iter().enumerate() {
        let factor = if p == a {
            pauli_matrix(term.indices.0)
        } else if p == b {
            pauli_matrix(term.indices.1)
        } else {
            CMatrix::identity(d, d)
        };
        out = out.kronecker(&factor);
    }
    Ok(out)
}

pub fn random_pure_state_from<R: Rng + ?Sized>(layout: &PartyLayout, rng: &mut R) -> QuantumState {
    let d = layout.total_dim();
    let amps = CVector::from_fn(d, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    QuantumState::pure(layout.clone(), amps).expect("Gaussian vector is nonzero")
}

/// Haar-random pure state from independent complex Gaussians; deterministic
/// for a fixed seed.
pub fn random_pure_state(layout: &PartyLayout, seed: u64) -> QuantumState {
    random_pure_state_from(layout, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Amplitudes reshaped to a `dim(side) x dim(rest)` matrix.
pub fn reshape_across(state: &QuantumState, side: &[usize]) -> Result<CMatrix> {
    let v = state
        .as_pure()
        .ok_or_else(|| CoreError::InvalidArgument("Schmidt decomposition needs a pure state".into()))?;
    let side = sorted_parties(&state.layout, side)?;
    let (ia, ib, da, db) = state.layout.split_indices(&side);
    let mut m = CMatrix::zeros(da, db);
    for (idx, amp) in v.iter().enumerate() {
        m[(ia[idx], ib[idx])] = *amp;
    }
    Ok(m)
}

/// Singular values of the amplitude matrix across the cut, descending.
pub fn schmidt_coefficients(state: &QuantumState, side: &[usize]) -> Result<Vec<f64>> {
    let m = reshape_across(state, side)?;
    let mut s: Vec<f64> = SVD::new(m, false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

pub fn schmidt_rank(state: &QuantumState, bipartition: &Bipartition, tol: f64) -> Result<usize> {
    if bipartition.n_parties() != state.layout.n_parties() {
        return invalid("bipartition and layout disagree on the number of parties");
    }
    Ok(schmidt_coefficients(state, &bipartition.members())?
        .iter()
        .filter(|&&s| s > tol)
        .count())
}
