//! Marginal configurations: sets of two-body marginals seen as graphs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarginalConfiguration {
    pub n_parties: usize,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Validity {
    pub valid: bool,
    pub reason: Option<String>,
}

impl MarginalConfiguration {
    /// Edges are stored as `(min, max)` in sorted order.
    pub fn new(n_parties: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(a, b) in edges {
            if a == b {
                return invalid(format!("self-loop on party {a}"));
            }
            if a >= n_parties || b >= n_parties {
                return invalid(format!("edge {a}-{b} out of range for {n_parties} parties"));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return invalid(format!("duplicate edge {a}-{b}"));
            }
        }
        Ok(Self {
            n_parties,
            edges: seen.into_iter().collect(),
        })
    }

    /// Parses `0-1,1-2,2-3`; `n_parties` defaults to one more than the
    /// largest index.
    pub fn parse(text: &str, n_parties: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let Some((a, b)) = part.split_once('-') else {
                return invalid(format!("edge `{part}` is not of the form a-b"));
            };
            let (Ok(a), Ok(b)) = (a.trim().parse::<usize>(), b.trim().parse::<usize>()) else {
                return invalid(format!("edge `{part}` has a non-integer endpoint"));
            };
            edges.push((a, b));
        }
        let inferred = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
        Self::new(n_parties.unwrap_or(inferred), &edges)
    }

    pub fn to_edge_string(&self) -> String {
        self.edges
            .iter()
            .map(|(a, b)| format!("{a}-{b}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        adjacency(self.n_parties, &self.edges)
    }

    /// Every party covered by an edge and the edge graph connected; a
    /// single party needs no edge.
    pub fn is_valid(&self) -> Validity {
        let fail = |reason: String| Validity {
            valid: false,
            reason: Some(reason),
        };
        if self.n_parties == 0 {
            return fail("no parties".into());
        }
        let adj = self.adjacency();
        if self.n_parties > 1 {
            if let Some(k) = (0..self.n_parties).find(|&k| adj[k].is_empty()) {
                return fail(format!("party {k} is not covered"));
            }
        }
        if component_sizes(&adj).len() > 1 {
            return fail("disconnected".into());
        }
        Validity {
            valid: true,
            reason: None,
        }
    }

    /// A valid configuration is minimal iff it is a tree.
    pub fn is_minimal(&self) -> Result<bool> {
        let v = self.is_valid();
        if !v.valid {
            return invalid(format!("configuration is not valid: {}", v.reason.unwrap_or_default()));
        }
        Ok(self.edges.len() + 1 == self.n_parties)
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }
}

fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    adj
}

fn component_sizes(adj: &[Vec<usize>]) -> Vec<usize> {
    let mut seen = vec![false; adj.len()];
    let mut sizes = Vec::new();
    for s in 0..adj.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        let mut size = 0;
        while let Some(v) = queue.pop_front() {
            size += 1;
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalTree {
    pub n_parties: usize,
    /// Edges after relabeling vertices in canonical DFS order from the
    /// centroid, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Equal for two trees iff they are isomorphic.
    pub id: String,
}

impl CanonicalTree {
    pub fn configuration(&self) -> MarginalConfiguration {
        MarginalConfiguration::new(self.n_parties, &self.edges).expect("canonical trees are valid")
    }
}

fn check_tree(n: usize, edges: &[(usize, usize)]) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return invalid("a tree needs at least one vertex");
    }
    let config = MarginalConfiguration::new(n, edges)?;
    if edges.len() + 1 != n || (n > 1 && !config.is_valid().valid) {
        return invalid("edge list is not a tree");
    }
    Ok(config.adjacency())
}

fn centroids(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    // Subtree sizes from an arbitrary root.
    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![0];
    parent[0] = 0;
    while let Some(v) = stack.pop() {
        order.push(v);
        for &w in &adj[v] {
            if parent[w] == usize::MAX {
                parent[w] = v;
                stack.push(w);
            }
        }
    }
    let mut size = vec![1; n];
    for &v in order.iter().rev() {
        if v != 0 {
            size[parent[v]] += size[v];
        }
    }
    let heaviest: Vec<usize> = (0..n)
        .map(|v| {
            adj[v]
                .iter()
                .filter(|&&w| w != 0 && parent[w] == v)
                .map(|&w| size[w])
                .fold(n - size[v], usize::max)
        })
        .collect();
    let best = *heaviest.iter().min().expect("non-empty tree");
    (0..n).filter(|&v| heaviest[v] == best).collect()
}

fn encode(adj: &[Vec<usize>], v: usize, parent: usize) -> String {
    let mut children: Vec<String> = adj[v]
        .iter()
        .filter(|&&w| w != parent)
        .map(|&w| encode(adj, w, v))
        .collect();
    children.sort();
    format!("({})", children.concat())
}

fn relabel(adj: &[Vec<usize>], root: usize) -> Vec<(usize, usize)> {
    fn walk(adj: &[Vec<usize>], v: usize, parent: usize, next: &mut usize, me: usize, out: &mut Vec<(usize, usize)>) {
        let mut children: Vec<(String, usize)> = adj[v]
            .iter()
            .filter(|&&w| w != parent)
            .map(|&w| (encode(adj, w, v), w))
            .collect();
        children.sort();
        for (_, w) in children {
            let label = *next;
            *next += 1;
            out.push((me, label));
            walk(adj, w, v, next, label, out);
        }
    }
    let mut out = Vec::new();
    let mut next = 1;
    walk(adj, root, usize::MAX, &mut next, 0, &mut out);
    out.sort_unstable();
    out
}

/// AHU encoding rooted at the centroid, the smaller one for bicentroidal trees.
pub fn canonical_id(n: usize, edges: &[(usize, usize)]) -> Result<String> {
    Ok(canonical_tree(n, edges)?.id)
}

pub fn canonical_tree(n: usize, edges: &[(usize, usize)]) -> Result<CanonicalTree> {
    let adj = check_tree(n, edges)?;
    let (id, root) = centroids(&adj)
        .into_iter()
        .map(|c| (encode(&adj, c, usize::MAX), c))
        .min()
        .expect("a tree has a centroid");
    Ok(CanonicalTree {
        n_parties: n,
        edges: relabel(&adj, root),
        id,
    })
}

fn diameter(n: usize, edges: &[(usize, usize)]) -> usize {
    let adj = adjacency(n, edges);
    let bfs = |s: usize| {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        let mut last = s;
        while let Some(v) = q.pop_front() {
            last = v;
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
            }
        }
        (last, dist[last])
    };
    let (far, _) = bfs(0);
    bfs(far).1
}

pub const MAX_TREE_VERTICES: usize = 12;

/// One representative per isomorphism class of trees on `n` vertices,
/// ordered by decreasing diameter (the path first) and then by id.
pub fn enumerate_trees(n: usize) -> Result<Vec<CanonicalTree>> {
    if n == 0 || n > MAX_TREE_VERTICES {
        return invalid(format!("n = {n} outside 1..={MAX_TREE_VERTICES}"));
    }
    let mut level: BTreeMap<String, CanonicalTree> = BTreeMap::new();
    let single = canonical_tree(1, &[])?;
    level.insert(single.id.clone(), single);
    for k in 1..n {
        let mut next = BTreeMap::new();
        for tree in level.values() {
            for v in 0..k {
                let mut edges = tree.edges.clone();
                edges.push((v, k));
                let t = canonical_tree(k + 1, &edges)?;
                next.entry(t.id.clone()).or_insert(t);
            }
        }
        level = next;
    }
    let mut trees: Vec<CanonicalTree> = level.into_values().collect();
    trees.sort_by(|a, b| {
        diameter(b.n_parties, &b.edges)
            .cmp(&diameter(a.n_parties, &a.edges))
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(trees)
}

/// All labeled trees isomorphic to `tree`, i.e. its orbit under relabeling.
pub fn labeled_copies(tree: &CanonicalTree) -> Vec<MarginalConfiguration> {
    let n = tree.n_parties;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = BTreeSet::new();
    loop {
        let mut edges: Vec<(usize, usize)> = tree
            .edges
            .iter()
            .map(|&(a, b)| (perm[a].min(perm[b]), perm[a].max(perm[b])))
            .collect();
        edges.sort_unstable();
        out.insert(edges);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    out.into_iter()
        .map(|e| MarginalConfiguration::new(n, &e).expect("relabeled tree is valid"))
        .collect()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
