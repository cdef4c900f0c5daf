//! Oracles shared by the acceptance suite: a max-eigenvalue SDP, a weak
//! duality audit over solver iterates and a Prufer tree-class count.

use std::collections::HashSet;

use gme_sdp::{IterateRecord, SdpProblem};
use nalgebra::DMatrix;

/// `min t` subject to `t I - A >= 0`; the optimum is the largest eigenvalue.
pub fn max_eigenvalue_problem(a: &DMatrix<f64>) -> SdpProblem {
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

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DualityAudit {
    pub solves: usize,
    pub iterates: usize,
    /// Iterates carrying both a certified primal and dual bound.
    pub bounded_iterates: usize,
    /// Largest `dual_bound - primal_bound` seen.
    pub max_violation: f64,
    /// Solves whose last iterate lacks one of the two bounds.
    pub unbounded_finals: usize,
}

impl DualityAudit {
    /// Adds one solve that ended optimal.
    pub fn record(&mut self, history: &[IterateRecord]) {
        self.solves += 1;
        self.iterates += history.len();
        for it in history {
            if let (Some(p), Some(d)) = (it.primal_bound, it.dual_bound) {
                self.bounded_iterates += 1;
                self.max_violation = self.max_violation.max(d - p);
            }
        }
        match history.last() {
            Some(last) if last.primal_bound.is_some() && last.dual_bound.is_some() => {}
            _ => self.unbounded_finals += 1,
        }
    }

    pub fn holds(&self, slack: f64) -> bool {
        self.solves > 0 && self.unbounded_finals == 0 && self.max_violation <= slack
    }
}

type EdgeSet = Vec<(usize, usize)>;

pub fn prufer_decode(n: usize, seq: &[usize]) -> EdgeSet {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf exists");
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges.sort_unstable();
    edges
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn relabel(edges: &EdgeSet, perm: &[usize]) -> EdgeSet {
    let mut e: EdgeSet = edges
        .iter()
        .map(|&(a, b)| (perm[a].min(perm[b]), perm[a].max(perm[b])))
        .collect();
    e.sort_unstable();
    e
}

/// Number of unlabeled trees on `n` vertices: all `n^(n-2)` Prufer codes,
/// grouped into relabeling orbits.
pub fn prufer_class_count(n: usize) -> usize {
    if n <= 2 {
        return 1;
    }
    let perms = permutations(n);
    let mut seen: HashSet<EdgeSet> = HashSet::new();
    let mut classes = 0;
    let total = n.pow(n as u32 - 2);
    for code in 0..total {
        let seq: Vec<usize> = (0..n - 2).map(|k| code / n.pow(k as u32) % n).collect();
        let tree = prufer_decode(n, &seq);
        if seen.contains(&tree) {
            continue;
        }
        for p in &perms {
            seen.insert(relabel(&tree, p));
        }
        classes += 1;
    }
    assert_eq!(seen.len(), total, "orbits must partition the labeled trees");
    classes
}
