//! Schur-complement storage with bordered block-diagonal structure.
//!
//! Blocks are grouped with a union-find over variables that touch at most
//! two blocks. A variable whose blocks all fall into one group is local to
//! that cluster; the rest form the border. The matrix is then
//!
//! ```text
//!     [ H_11            C_1 ]
//!     [       ...       ... ]
//!     [            H_kk C_k ]
//!     [ C_1^T ...  C_k^T  B ]
//! ```
//!
//! and is factored by eliminating the clusters first.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Cluster(usize, usize),
    Border(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct SchurLayout {
    pub slots: Vec<Slot>,
    pub cluster_sizes: Vec<usize>,
    pub border_size: usize,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl SchurLayout {
    pub fn new(num_blocks: usize, var_blocks: &[Vec<usize>]) -> Self {
        let mut parent: Vec<usize> = (0..num_blocks).collect();
        for blocks in var_blocks {
            if blocks.len() <= 2 {
                for w in blocks.windows(2) {
                    let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut cluster_of_root = vec![usize::MAX; num_blocks];
        let mut cluster_sizes: Vec<usize> = Vec::new();
        let mut border_size = 0;
        let mut slots = Vec::with_capacity(var_blocks.len());
        for blocks in var_blocks {
            let mut roots: Vec<usize> = blocks.iter().map(|&b| find(&mut parent, b)).collect();
            roots.sort_unstable();
            roots.dedup();
            if roots.len() == 1 {
                let r = roots[0];
                if cluster_of_root[r] == usize::MAX {
                    cluster_of_root[r] = cluster_sizes.len();
                    cluster_sizes.push(0);
                }
                let c = cluster_of_root[r];
                slots.push(Slot::Cluster(c, cluster_sizes[c]));
                cluster_sizes[c] += 1;
            } else {
                slots.push(Slot::Border(border_size));
                border_size += 1;
            }
        }
        Self {
            slots,
            cluster_sizes,
            border_size,
        }
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SchurMatrix {
    pub diag_blocks: Vec<DMatrix<f64>>,
    pub coupling: Vec<DMatrix<f64>>,
    pub border: DMatrix<f64>,
}

impl SchurMatrix {
    pub fn zeros(layout: &SchurLayout) -> Self {
        Self {
            diag_blocks: layout
                .cluster_sizes
                .iter()
                .map(|&n| DMatrix::zeros(n, n))
                .collect(),
            coupling: layout
                .cluster_sizes
                .iter()
                .map(|&n| DMatrix::zeros(n, layout.border_size))
                .collect(),
            border: DMatrix::zeros(layout.border_size, layout.border_size),
        }
    }

    /// Adds `v` at position `(i, j)` of the full matrix. The caller supplies
    /// both `(i, j)` and `(j, i)`; the cluster/border coupling keeps only the
    /// cluster-row copy.
    pub fn add(&mut self, layout: &SchurLayout, i: usize, j: usize, v: f64) {
        match (layout.slots[i], layout.slots[j]) {
            (Slot::Cluster(ci, li), Slot::Cluster(cj, lj)) => {
                debug_assert_eq!(ci, cj);
                self.diag_blocks[ci][(li, lj)] += v;
            }
            (Slot::Cluster(ci, li), Slot::Border(bj)) => self.coupling[ci][(li, bj)] += v,
            (Slot::Border(_), Slot::Cluster(..)) => {}
            (Slot::Border(bi), Slot::Border(bj)) => self.border[(bi, bj)] += v,
        }
    }

    pub fn max_diag(&self) -> f64 {
        let mut m: f64 = 0.0;
        for b in &self.diag_blocks {
            for i in 0..b.nrows() {
                m = m.max(b[(i, i)]);
            }
        }
        for i in 0..self.border.nrows() {
            m = m.max(self.border[(i, i)]);
        }
        m
    }

    #[cfg(test)]
    pub fn mul(&self, layout: &SchurLayout, x: &DVector<f64>) -> DVector<f64> {
        let (xc, xb) = split(layout, x);
        let mut yc: Vec<DVector<f64>> = Vec::with_capacity(xc.len());
        let mut yb = &self.border * &xb;
        for (k, xk) in xc.iter().enumerate() {
            yc.push(&self.diag_blocks[k] * xk + &self.coupling[k] * &xb);
            yb += self.coupling[k].tr_mul(xk);
        }
        join(layout, &yc, &yb)
    }

    /// Cholesky-based factorization with relative diagonal regularization.
    pub fn factor(&self, reg: f64) -> Option<SchurFactor> {
        let floor = 1e-14 * self.max_diag().max(f64::MIN_POSITIVE);
        let regularize = |m: &mut DMatrix<f64>| {
            for i in 0..m.nrows() {
                let d = m[(i, i)];
                m[(i, i)] = d + reg * d.max(floor);
            }
        };
        let mut chols = Vec::with_capacity(self.diag_blocks.len());
        let mut solved = Vec::with_capacity(self.diag_blocks.len());
        let mut reduced = self.border.clone();
        regularize(&mut reduced);
        for (h, c) in self.diag_blocks.iter().zip(&self.coupling) {
            let mut h = h.clone();
            regularize(&mut h);
            let chol = Cholesky::new(h)?;
            let x = chol.l_dirty().solve_lower_triangular(c)?;
            reduced -= x.tr_mul(&x);
            chols.push(chol);
            solved.push(x);
        }
        let border = if reduced.nrows() > 0 {
            Some(Cholesky::new(reduced)?)
        } else {
            None
        };
        Some(SchurFactor {
            chols,
            solved,
            border,
        })
    }
}

pub(crate) struct SchurFactor {
    chols: Vec<Cholesky<f64, Dyn>>,
    solved: Vec<DMatrix<f64>>,
    border: Option<Cholesky<f64, Dyn>>,
}

impl SchurFactor {
    pub fn solve(&self, layout: &SchurLayout, rhs: &DVector<f64>) -> DVector<f64> {
        let (rc, mut rb) = split(layout, rhs);
        let mut yc = Vec::with_capacity(rc.len());
        for (k, r) in rc.iter().enumerate() {
            let y = self.chols[k]
                .l_dirty()
                .solve_lower_triangular(r)
                .expect("Cholesky factor has a nonzero diagonal");
            rb -= self.solved[k].tr_mul(&y);
            yc.push(y);
        }
        let xb = match &self.border {
            Some(ch) => ch.solve(&rb),
            None => rb,
        };
        let xc: Vec<DVector<f64>> = yc
            .into_iter()
            .enumerate()
            .map(|(k, y)| {
                let t = y - &self.solved[k] * &xb;
                self.chols[k]
                    .l_dirty()
                    .tr_solve_lower_triangular(&t)
                    .expect("Cholesky factor has a nonzero diagonal")
            })
            .collect();
        join(layout, &xc, &xb)
    }
}

fn split(layout: &SchurLayout, x: &DVector<f64>) -> (Vec<DVector<f64>>, DVector<f64>) {
    let mut xc: Vec<DVector<f64>> = layout
        .cluster_sizes
        .iter()
        .map(|&n| DVector::zeros(n))
        .collect();
    let mut xb = DVector::zeros(layout.border_size);
    for (i, slot) in layout.slots.iter().enumerate() {
        match *slot {
            Slot::Cluster(c, l) => xc[c][l] = x[i],
            Slot::Border(b) => xb[b] = x[i],
        }
    }
    (xc, xb)
}

fn join(layout: &SchurLayout, xc: &[DVector<f64>], xb: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        layout.dim(),
        layout.slots.iter().map(|slot| match *slot {
            Slot::Cluster(c, l) => xc[c][l],
            Slot::Border(b) => xb[b],
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrow_structure_is_detected() {
        // vars 0,1 live in blocks {0,1}, vars 2,3 in {2,3}, var 4 touches all.
        let var_blocks = vec![
            vec![0, 1],
            vec![0, 1],
            vec![2, 3],
            vec![2],
            vec![0, 1, 2, 3],
        ];
        let layout = SchurLayout::new(4, &var_blocks);
        assert_eq!(layout.cluster_sizes, vec![2, 2]);
        assert_eq!(layout.border_size, 1);
        assert_eq!(layout.slots[4], Slot::Border(0));
    }

    #[test]
    fn bordered_solve_matches_dense() {
        let var_blocks = vec![vec![0], vec![0], vec![1], vec![0, 1, 2]];
        let layout = SchurLayout::new(3, &var_blocks);
        let dense = DMatrix::from_row_slice(
            4,
            4,
            &[
                4.0, 1.0, 0.0, 0.5, //
                1.0, 3.0, 0.0, -0.2, //
                0.0, 0.0, 2.0, 0.3, //
                0.5, -0.2, 0.3, 5.0,
            ],
        );
        let mut h = SchurMatrix::zeros(&layout);
        for i in 0..4 {
            for j in 0..4 {
                if dense[(i, j)] != 0.0 {
                    h.add(&layout, i, j, dense[(i, j)]);
                }
            }
        }
        let rhs = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let x = h.factor(0.0).unwrap().solve(&layout, &rhs);
        assert!((&dense * &x - &rhs).norm() < 1e-12);
        assert!((h.mul(&layout, &x) - rhs).norm() < 1e-12);
    }
}
