//! Larger states from copies of a pure chain-shaped block state spread over
//! a target nearest-neighbour graph. Each target party hosts one or more block
//! qubits; every target-edge marginal is then a product of block marginals.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::configurations::MarginalConfiguration;
use crate::error::{invalid, CoreError, Result};
use crate::tensor::{
    kron, partial_trace, schmidt_rank, Bipartition, CMatrix, CVector, PartyLayout, QuantumState, C64,
};

pub const MAX_COMPOSITE_QUBITS: usize = 22;
pub const FACTORIZATION_TOL: f64 = 1e-10;
pub const SCHMIDT_TOL: f64 = 1e-9;
/// Composite dimension up to which cuts are checked by a direct SVD.
pub const DIRECT_SCHMIDT_MAX_QUBITS: usize = 12;

/// `rows x cols` lattice, vertex `r * cols + c`.
pub fn grid_graph(rows: usize, cols: usize) -> Result<MarginalConfiguration> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    MarginalConfiguration::new(rows * cols, &edges)
}

/// Parses `RxC`.
pub fn parse_grid(text: &str) -> Result<MarginalConfiguration> {
    let parse = |s: &str| s.trim().parse::<usize>().ok().filter(|&v| v > 0);
    match text.split_once(['x', 'X']).map(|(a, b)| (parse(a), parse(b))) {
        Some((Some(r), Some(c))) => grid_graph(r, c),
        _ => invalid(format!("grid `{text}` is not of the form RxC")),
    }
}

fn adjacency(graph: &MarginalConfiguration) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); graph.n_parties];
    for &(a, b) in &graph.edges {
        adj[a].insert(b);
        adj[b].insert(a);
    }
    adj
}

fn simple_paths(adj: &[BTreeSet<usize>], len: usize) -> Vec<Vec<usize>> {
    fn extend(adj: &[BTreeSet<usize>], len: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if path.len() == len {
            // Each undirected path once.
            if path[0] < path[len - 1] || len == 1 {
                out.push(path.clone());
            }
            return;
        }
        let last = *path.last().expect("non-empty path");
        for &next in &adj[last] {
            if !path.contains(&next) {
                path.push(next);
                extend(adj, len, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    for start in 0..adj.len() {
        extend(adj, len, &mut vec![start], &mut out);
    }
    out
}

fn uncovered(n: usize, paths: &[&Vec<usize>]) -> BTreeSet<usize> {
    let mut left: BTreeSet<usize> = (0..n).collect();
    for p in paths {
        for v in p.iter() {
            left.remove(v);
        }
    }
    left
}

/// Copies sharing a vertex are linked; a composite is entangled across every
/// target cut only if these links connect all copies.
pub fn overlap_connected(paths: &[Vec<usize>]) -> bool {
    if paths.is_empty() {
        return true;
    }
    let mut seen = vec![false; paths.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..paths.len() {
            if !seen[j] && paths[i].iter().any(|v| paths[j].contains(v)) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Paths of exactly `len` vertices along graph edges that together cover
/// every vertex, with connected overlaps. Greedy choice of the path covering
/// most new vertices while touching the covered region, then local search:
/// drop redundant paths and replace any two paths by one when possible. Not
/// guaranteed minimal.
pub fn path_cover(graph: &MarginalConfiguration, len: usize) -> Result<Vec<Vec<usize>>> {
    if len < 2 {
        return invalid(format!("block size {len} is below 2"));
    }
    let adj = adjacency(graph);
    if let Some(v) = (0..graph.n_parties).find(|&v| adj[v].is_empty()) {
        return invalid(format!("vertex {v} has no neighbours"));
    }
    let candidates = simple_paths(&adj, len);
    if candidates.is_empty() {
        return invalid(format!("graph has no simple path on {len} vertices"));
    }
    let n = graph.n_parties;
    let mut chosen: Vec<Vec<usize>> = Vec::new();
    let mut left: BTreeSet<usize> = (0..n).collect();
    while !left.is_empty() {
        // Most new vertices first, then paths through the least-connected
        // uncovered vertex so that leaves are not stranded.
        let hard = *left.iter().min_by_key(|&&v| (adj[v].len(), v)).expect("non-empty");
        let best = candidates
            .iter()
            .filter(|p| chosen.is_empty() || p.iter().any(|v| !left.contains(v)))
            .max_by_key(|p| {
                let new = p.iter().filter(|v| left.contains(v)).count();
                (new, p.contains(&hard), std::cmp::Reverse((*p).clone()))
            });
        let Some(best) = best.filter(|p| p.iter().any(|v| left.contains(v))) else {
            let v = *left.iter().next().expect("non-empty");
            return invalid(format!("vertex {v} lies on no path of {len} vertices"));
        };
        for v in best {
            left.remove(v);
        }
        chosen.push(best.clone());
    }
    let covers = |paths: &[Vec<usize>]| {
        let refs: Vec<&Vec<usize>> = paths.iter().collect();
        uncovered(n, &refs).is_empty() && overlap_connected(paths)
    };
    'search: loop {
        for i in 0..chosen.len() {
            let mut trial = chosen.clone();
            trial.remove(i);
            if covers(&trial) {
                chosen = trial;
                continue 'search;
            }
        }
        for i in 0..chosen.len() {
            for j in (i + 1)..chosen.len() {
                let rest: Vec<&Vec<usize>> = chosen
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i && k != j)
                    .map(|(_, p)| p)
                    .collect();
                let need = uncovered(n, &rest);
                for p in candidates.iter().filter(|p| need.iter().all(|v| p.contains(v))) {
                    let mut trial = chosen.clone();
                    trial.remove(j);
                    trial[i] = p.clone();
                    if covers(&trial) {
                        chosen = trial;
                        continue 'search;
                    }
                }
            }
        }
        break;
    }
    chosen.sort();
    Ok(chosen)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlueAssignment {
    pub graph: MarginalConfiguration,
    pub block_size: usize,
    /// `placements[c][k]` is the target party hosting qubit `k` of copy `c`.
    pub placements: Vec<Vec<usize>>,
}

impl GlueAssignment {
    pub fn new(graph: MarginalConfiguration, block_size: usize, placements: Vec<Vec<usize>>) -> Result<Self> {
        let a = Self {
            graph,
            block_size,
            placements,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn from_path_cover(graph: MarginalConfiguration, block_size: usize) -> Result<Self> {
        let placements = path_cover(&graph, block_size)?;
        Self::new(graph, block_size, placements)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n_parties;
        let mut hosted = vec![0usize; n];
        for (c, p) in self.placements.iter().enumerate() {
            if p.len() != self.block_size {
                return invalid(format!("copy {c} places {} qubits, block has {}", p.len(), self.block_size));
            }
            for &v in p {
                if v >= n {
                    return invalid(format!("copy {c} uses party {v} out of range"));
                }
                hosted[v] += 1;
            }
            for w in p.windows(2) {
                if !self.graph.contains(w[0], w[1]) {
                    return invalid(format!("copy {c} steps {}-{} which is not a target edge", w[0], w[1]));
                }
            }
        }
        if let Some(v) = hosted.iter().position(|&h| h == 0) {
            return invalid(format!("party {v} hosts no block qubit"));
        }
        Ok(())
    }

    pub fn total_qubits(&self) -> usize {
        self.placements.len() * self.block_size
    }

    /// Block qubits `(copy, position)` hosted by each party, in copy order.
    pub fn hosted(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.graph.n_parties];
        for (c, p) in self.placements.iter().enumerate() {
            for (k, &v) in p.iter().enumerate() {
                out[v].push((c, k));
            }
        }
        out
    }

    pub fn layout(&self) -> Result<PartyLayout> {
        PartyLayout::new(self.hosted().iter().map(|h| 1usize << h.len()).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub label: String,
    pub state: QuantumState,
    /// Detection certificate on record.
    pub certified: bool,
    /// Unique ground state of its witness.
    pub unique: bool,
}

#[derive(Debug, Clone)]
pub struct CompositeState {
    pub state: QuantumState,
    pub assignment: GlueAssignment,
    pub block: Block,
}

/// Bit position (from the most significant end) of each `(copy, position)`
/// qubit in the party-grouped composite.
fn composite_positions(assignment: &GlueAssignment) -> HashMap<(usize, usize), usize> {
    assignment
        .hosted()
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(slot, q)| (q, slot))
        .collect()
}

/// Reorders qubit factors of a vector: source qubit `i` (MSB first) moves
/// to target position `perm[i]`.
fn permute_qubits_vec(v: &CVector, perm: &[usize]) -> CVector {
    let n = perm.len();
    let mut out = CVector::zeros(v.len());
    for (src, amp) in v.iter().enumerate() {
        let mut dst = 0usize;
        for (i, &p) in perm.iter().enumerate() {
            if src >> (n - 1 - i) & 1 == 1 {
                dst |= 1 << (n - 1 - p);
            }
        }
        out[dst] = *amp;
    }
    out
}

fn permute_qubits_mat(m: &CMatrix, perm: &[usize]) -> CMatrix {
    let n = perm.len();
    let map = |src: usize| {
        perm.iter()
            .enumerate()
            .filter(|&(i, _)| src >> (n - 1 - i) & 1 == 1)
            .fold(0usize, |acc, (_, &p)| acc | 1 << (n - 1 - p))
    };
    let idx: Vec<usize> = (0..m.nrows()).map(map).collect();
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out[(idx[r], idx[c])] = m[(r, c)];
        }
    }
    out
}

/// Tensor product of the placed copies regrouped by target party.
pub fn glue_states(block: &Block, assignment: &GlueAssignment) -> Result<CompositeState> {
    assignment.validate()?;
    let Some(psi) = block.state.as_pure() else {
        return invalid("block state must be pure");
    };
    let layout = block.state.layout();
    if !layout.is_qubits() || layout.n_parties() != assignment.block_size {
        return invalid(format!(
            "block has {} parties of dims {:?}, assignment expects {} qubits",
            layout.n_parties(),
            layout.dims(),
            assignment.block_size
        ));
    }
    let total = assignment.total_qubits();
    if total > MAX_COMPOSITE_QUBITS {
        return Err(CoreError::ResourceLimit(format!(
            "composite of {total} qubits exceeds {MAX_COMPOSITE_QUBITS}"
        )));
    }
    let mut product = CVector::from_element(1, C64::new(1.0, 0.0));
    for _ in &assignment.placements {
        product = product.kronecker(psi);
    }
    let pos = composite_positions(assignment);
    let perm: Vec<usize> = (0..assignment.placements.len())
        .flat_map(|c| (0..assignment.block_size).map(move |k| (c, k)))
        .map(|q| pos[&q])
        .collect();
    let state = QuantumState::pure(assignment.layout()?, permute_qubits_vec(&product, &perm))?;
    Ok(CompositeState {
        state,
        assignment: assignment.clone(),
        block: block.clone(),
    })
}

/// Block-product form of the marginal on target parties `parties`.
pub fn expected_marginal(composite: &CompositeState, parties: &[usize]) -> Result<CMatrix> {
    let a = &composite.assignment;
    let hosted = a.hosted();
    let mut parties = parties.to_vec();
    parties.sort_unstable();
    // Qubits in the marginal's own order (party-grouped) and their source.
    let kept: Vec<(usize, usize)> = parties.iter().flat_map(|&p| hosted[p].iter().copied()).collect();
    let mut by_copy: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(c, k) in &kept {
        by_copy.entry(c).or_default().push(k);
    }
    let mut product = CMatrix::identity(1, 1);
    let mut source_order = Vec::new();
    for (c, mut ks) in by_copy {
        ks.sort_unstable();
        product = kron(&product, &partial_trace(&composite.block.state, &ks)?);
        source_order.extend(ks.into_iter().map(|k| (c, k)));
    }
    let perm: Vec<usize> = source_order
        .iter()
        .map(|q| kept.iter().position(|x| x == q).expect("kept qubit"))
        .collect();
    Ok(permute_qubits_mat(&product, &perm))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutMethod {
    DirectSvd,
    BlockProduct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub n_parties: usize,
    pub party_dims: Vec<usize>,
    pub total_qubits: usize,
    pub copies: usize,
    pub norm_defect: f64,
    pub pure: bool,
    pub cuts_checked: usize,
    pub min_schmidt_rank: usize,
    pub cut_method: CutMethod,
    pub all_cuts_entangled: bool,
    pub max_factorization_residual: f64,
    pub marginals_factorize: bool,
    pub pedigree: bool,
    pub passed: bool,
}

fn block_rank(block: &QuantumState, mask: usize, cache: &mut HashMap<usize, usize>) -> Result<usize> {
    let n = block.layout().n_parties();
    let full = (1usize << n) - 1;
    if mask == 0 || mask == full {
        return Ok(1);
    }
    if let Some(&r) = cache.get(&mask) {
        return Ok(r);
    }
    let members: Vec<usize> = (0..n).filter(|k| mask >> k & 1 == 1).collect();
    let r = schmidt_rank(block, &Bipartition::new(n, &members)?, SCHMIDT_TOL)?;
    cache.insert(mask, r);
    Ok(r)
}

/// Minimum Schmidt rank over all target bipartitions, as the product over
/// copies of each copy's rank across its induced cut.
pub fn block_product_min_rank(composite: &CompositeState) -> Result<(usize, usize)> {
    let a = &composite.assignment;
    let cuts = Bipartition::all(a.graph.n_parties)?;
    let mut cache = HashMap::new();
    let mut min_rank = usize::MAX;
    for cut in &cuts {
        let mut rank = 1usize;
        for p in &a.placements {
            let mask = p
                .iter()
                .enumerate()
                .filter(|&(_, &v)| cut.contains(v))
                .fold(0usize, |m, (k, _)| m | 1 << k);
            rank = rank.saturating_mul(block_rank(&composite.block.state, mask, &mut cache)?);
        }
        min_rank = min_rank.min(rank);
    }
    Ok((min_rank, cuts.len()))
}

pub fn direct_min_rank(composite: &CompositeState) -> Result<(usize, usize)> {
    let cuts = Bipartition::all(composite.assignment.graph.n_parties)?;
    let mut min_rank = usize::MAX;
    for cut in &cuts {
        min_rank = min_rank.min(schmidt_rank(&composite.state, cut, SCHMIDT_TOL)?);
    }
    Ok((min_rank, cuts.len()))
}

pub fn verify_construction(composite: &CompositeState) -> Result<ConstructionReport> {
    let a = &composite.assignment;
    let psi = composite.state.as_pure().ok_or_else(|| CoreError::InvalidArgument("composite is not pure".into()))?;
    let norm_defect = (psi.norm() - 1.0).abs();
    let pure = norm_defect < 1e-12;
    let total = a.total_qubits();
    let (cut_method, (min_rank, cuts)) = if total <= DIRECT_SCHMIDT_MAX_QUBITS {
        (CutMethod::DirectSvd, direct_min_rank(composite)?)
    } else {
        (CutMethod::BlockProduct, block_product_min_rank(composite)?)
    };
    let mut residual = 0.0f64;
    for &(u, v) in &a.graph.edges {
        let actual = partial_trace(&composite.state, &[u, v])?;
        let expected = expected_marginal(composite, &[u, v])?;
        residual = residual.max((actual - expected).camax());
    }
    let all_cuts_entangled = min_rank >= 2;
    let marginals_factorize = residual <= FACTORIZATION_TOL;
    let pedigree = composite.block.certified && composite.block.unique;
    Ok(ConstructionReport {
        n_parties: a.graph.n_parties,
        party_dims: composite.state.layout().dims().to_vec(),
        total_qubits: total,
        copies: a.placements.len(),
        norm_defect,
        pure,
        cuts_checked: cuts,
        min_schmidt_rank: min_rank,
        cut_method,
        all_cuts_entangled,
        max_factorization_residual: residual,
        marginals_factorize,
        pedigree,
        passed: pure && all_cuts_entangled && marginals_factorize && pedigree,
    })
}
