//! Problem data in linear-matrix-inequality form.
//!
//! ```text
//!     minimize    c^T x
//!     subject to  F(x) = F_0 + sum_i x_i F_i  is PSD (block-diagonal)
//!                 A x = b                     (optional)
//! ```
//!
//! The dual problem is
//!
//! ```text
//!     maximize    -Tr(F_0 Z) - b^T y
//!     subject to  Tr(F_i Z) = c_i + (A^T y)_i,  Z PSD
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Result, SdpError};

/// One stored entry of a symmetric block matrix. `row <= col`; an
/// off-diagonal entry stands for both `(row, col)` and `(col, row)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Sparse symmetric block-diagonal matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseBlockMatrix {
    entries: Vec<Entry>,
}

impl SparseBlockMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `value` at `(row, col)` and, off the diagonal, at `(col, row)`.
    pub fn add(&mut self, block: usize, row: usize, col: usize, value: f64) {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        self.entries.push(Entry {
            block,
            row,
            col,
            value,
        });
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Merges duplicate positions and drops exact zeros; entries end up
    /// sorted by (block, row, col).
    pub fn compress(&mut self) {
        let mut merged: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for e in &self.entries {
            *merged.entry((e.block, e.row, e.col)).or_insert(0.0) += e.value;
        }
        self.entries = merged
            .into_iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|((block, row, col), value)| Entry {
                block,
                row,
                col,
                value,
            })
            .collect();
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    value: e.value * factor,
                    ..*e
                })
                .collect(),
        }
    }

    /// `self += factor * other` (uncompressed).
    pub fn axpy(&mut self, factor: f64, other: &SparseBlockMatrix) {
        for e in &other.entries {
            self.entries.push(Entry {
                value: e.value * factor,
                ..*e
            });
        }
    }

    /// Squared Frobenius norm of the full symmetric matrix.
    pub fn frobenius_sq(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let w = if e.row == e.col { 1.0 } else { 2.0 };
                w * e.value * e.value
            })
            .sum()
    }

    /// `Tr(self * Z)` for dense symmetric blocks `z`.
    pub fn inner(&self, z: &[DMatrix<f64>]) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let zb = &z[e.block];
                if e.row == e.col {
                    e.value * zb[(e.row, e.row)]
                } else {
                    e.value * (zb[(e.row, e.col)] + zb[(e.col, e.row)])
                }
            })
            .sum()
    }

    /// Accumulates `factor * self` into dense blocks.
    pub fn add_to_dense(&self, factor: f64, out: &mut [DMatrix<f64>]) {
        for e in &self.entries {
            let v = factor * e.value;
            let b = &mut out[e.block];
            b[(e.row, e.col)] += v;
            if e.row != e.col {
                b[(e.col, e.row)] += v;
            }
        }
    }
}

/// Linear equality `sum_k coeff_k x_{var_k} = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEquality {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    block_sizes: Vec<usize>,
    objective: Vec<f64>,
    constant: SparseBlockMatrix,
    coefficients: Vec<SparseBlockMatrix>,
    equalities: Vec<LinearEquality>,
}

impl SdpProblem {
    pub fn new(block_sizes: Vec<usize>) -> Self {
        Self {
            block_sizes,
            objective: Vec::new(),
            constant: SparseBlockMatrix::new(),
            coefficients: Vec::new(),
            equalities: Vec::new(),
        }
    }

    /// Registers a new scalar variable with objective coefficient `cost`
    /// and returns its index.
    pub fn add_variable(&mut self, cost: f64) -> usize {
        self.objective.push(cost);
        self.coefficients.push(SparseBlockMatrix::new());
        self.objective.len() - 1
    }

    pub fn add_constant_entry(&mut self, block: usize, row: usize, col: usize, value: f64) {
        self.constant.add(block, row, col, value);
    }

    pub fn add_entry(&mut self, var: usize, block: usize, row: usize, col: usize, value: f64) {
        self.coefficients[var].add(block, row, col, value);
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearEquality { coeffs, rhs });
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constant(&self) -> &SparseBlockMatrix {
        &self.constant
    }

    pub fn coefficient(&self, var: usize) -> &SparseBlockMatrix {
        &self.coefficients[var]
    }

    pub fn coefficients(&self) -> &[SparseBlockMatrix] {
        &self.coefficients
    }

    pub fn equalities(&self) -> &[LinearEquality] {
        &self.equalities
    }

    /// Merges duplicate entries in every matrix.
    pub fn compress(&mut self) {
        self.constant.compress();
        for f in &mut self.coefficients {
            f.compress();
        }
    }

    /// Checks structural consistency: at least one variable, positive
    /// block sizes, every entry inside its block and every value finite.
    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() {
            return Err(SdpError::InvalidArgument("problem has no blocks".into()));
        }
        if let Some(b) = self.block_sizes.iter().position(|&s| s == 0) {
            return Err(SdpError::InvalidArgument(format!("block {b} has size 0")));
        }
        if self.objective.is_empty() {
            return Err(SdpError::InvalidArgument("problem has no variables".into()));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(SdpError::InvalidArgument("non-finite objective".into()));
        }
        let check = |m: &SparseBlockMatrix, what: &str| -> Result<()> {
            for e in m.entries() {
                let size = *self.block_sizes.get(e.block).ok_or_else(|| {
                    SdpError::InvalidArgument(format!("{what}: block {} out of range", e.block))
                })?;
                if e.col >= size {
                    return Err(SdpError::InvalidArgument(format!(
                        "{what}: entry ({}, {}) outside block {} of size {size}",
                        e.row, e.col, e.block
                    )));
                }
                if !e.value.is_finite() {
                    return Err(SdpError::InvalidArgument(format!("{what}: non-finite entry")));
                }
            }
            Ok(())
        };
        check(&self.constant, "F_0")?;
        for (i, f) in self.coefficients.iter().enumerate() {
            check(f, &format!("F_{}", i + 1))?;
        }
        for (k, eq) in self.equalities.iter().enumerate() {
            if !eq.rhs.is_finite() {
                return Err(SdpError::InvalidArgument(format!("equality {k}: non-finite rhs")));
            }
            for &(v, a) in &eq.coeffs {
                if v >= self.num_vars() || !a.is_finite() {
                    return Err(SdpError::InvalidArgument(format!(
                        "equality {k}: bad coefficient for variable {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn zero_blocks(&self) -> Vec<DMatrix<f64>> {
        self.block_sizes
            .iter()
            .map(|&n| DMatrix::zeros(n, n))
            .collect()
    }

    /// Dense `F(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out = self.zero_blocks();
        self.constant.add_to_dense(1.0, &mut out);
        for (f, &xi) in self.coefficients.iter().zip(x) {
            if xi != 0.0 {
                f.add_to_dense(xi, &mut out);
            }
        }
        out
    }

    pub fn primal_objective(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Writes the problem in SDPA sparse format. SDPA uses
    /// `sum_i x_i F_i - F_0 >= 0`, so the constant matrix is written negated.
    /// Equalities are emitted as `*eq rhs var:coef ...` comment lines
    /// (1-based variables), which other SDPA readers skip.
    pub fn to_sdpa_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "* block-diagonal SDP, SDPA sparse format");
        for eq in &self.equalities {
            let _ = write!(out, "*eq {:e}", eq.rhs);
            for (v, a) in &eq.coeffs {
                let _ = write!(out, " {}:{:e}", v + 1, a);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "{}", self.num_vars());
        let _ = writeln!(out, "{}", self.block_sizes.len());
        let sizes: Vec<String> = self.block_sizes.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "{}", sizes.join(" "));
        let costs: Vec<String> = self.objective.iter().map(|c| format!("{c:e}")).collect();
        let _ = writeln!(out, "{}", costs.join(" "));
        let mut f0 = self.constant.clone();
        f0.compress();
        for e in f0.entries() {
            let _ = writeln!(
                out,
                "0 {} {} {} {:e}",
                e.block + 1,
                e.row + 1,
                e.col + 1,
                -e.value
            );
        }
        for (i, f) in self.coefficients.iter().enumerate() {
            let mut f = f.clone();
            f.compress();
            for e in f.entries() {
                let _ = writeln!(
                    out,
                    "{} {} {} {} {:e}",
                    i + 1,
                    e.block + 1,
                    e.row + 1,
                    e.col + 1,
                    e.value
                );
            }
        }
        out
    }

    /// Parses the format written by [`SdpProblem::to_sdpa_string`]. Negative
    /// (diagonal) SDPA block sizes are read as PSD blocks of the same order.
    pub fn from_sdpa_str(text: &str) -> Result<Self> {
        let mut equalities = Vec::new();
        let mut tokens: Vec<(usize, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let trimmed = raw.trim();
            if let Some(rest) = trimmed.strip_prefix("*eq") {
                let mut parts = rest.split_whitespace();
                let rhs = parse_f64(parts.next(), line)?;
                let mut coeffs = Vec::new();
                for p in parts {
                    let (v, a) = p.split_once(':').ok_or_else(|| SdpError::Parse {
                        line,
                        message: format!("expected var:coef, got {p:?}"),
                    })?;
                    let v: usize = v.parse().map_err(|_| SdpError::Parse {
                        line,
                        message: format!("bad variable index {v:?}"),
                    })?;
                    if v == 0 {
                        return Err(SdpError::Parse {
                            line,
                            message: "variable indices are 1-based".into(),
                        });
                    }
                    coeffs.push((v - 1, parse_f64(Some(a), line)?));
                }
                equalities.push(LinearEquality { coeffs, rhs });
                continue;
            }
            if trimmed.is_empty() || trimmed.starts_with('*') || trimmed.starts_with('"') {
                continue;
            }
            for tok in trimmed.split(|c: char| c.is_whitespace() || "{}(),".contains(c)) {
                if !tok.is_empty() {
                    tokens.push((line, tok.to_string()));
                }
            }
        }
        let mut it = tokens.into_iter();
        let mut next = |what: &str| -> Result<(usize, String)> {
            it.next().ok_or_else(|| SdpError::Parse {
                line: 0,
                message: format!("unexpected end of input, expected {what}"),
            })
        };
        let (line, tok) = next("variable count")?;
        let m: usize = parse_usize(&tok, line)?;
        let (line, tok) = next("block count")?;
        let nblocks: usize = parse_usize(&tok, line)?;
        let mut sizes = Vec::with_capacity(nblocks);
        for _ in 0..nblocks {
            let (line, tok) = next("block size")?;
            let s: i64 = tok.parse().map_err(|_| SdpError::Parse {
                line,
                message: format!("bad block size {tok:?}"),
            })?;
            sizes.push(s.unsigned_abs() as usize);
        }
        let mut problem = SdpProblem::new(sizes);
        for _ in 0..m {
            let (line, tok) = next("objective coefficient")?;
            problem.add_variable(parse_f64(Some(&tok), line)?);
        }
        loop {
            let Ok((line, tok)) = next("") else { break };
            let mat = parse_usize(&tok, line)?;
            let (l1, blk) = next("block index")?;
            let (l2, i) = next("row index")?;
            let (l3, j) = next("column index")?;
            let (l4, v) = next("value")?;
            let blk = parse_usize(&blk, l1)?;
            let i = parse_usize(&i, l2)?;
            let j = parse_usize(&j, l3)?;
            let v = parse_f64(Some(&v), l4)?;
            if blk == 0 || i == 0 || j == 0 || blk > nblocks || mat > m {
                return Err(SdpError::Parse {
                    line,
                    message: "matrix, block or entry index out of range".into(),
                });
            }
            if mat == 0 {
                problem.add_constant_entry(blk - 1, i - 1, j - 1, -v);
            } else {
                problem.add_entry(mat - 1, blk - 1, i - 1, j - 1, v);
            }
        }
        problem.equalities = equalities;
        problem.validate().map_err(|e| SdpError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(problem)
    }
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| SdpError::Parse {
        line,
        message: format!("expected a non-negative integer, got {tok:?}"),
    })
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| SdpError::Parse {
        line,
        message: "missing number".into(),
    })?;
    tok.parse().map_err(|_| SdpError::Parse {
        line,
        message: format!("expected a number, got {tok:?}"),
    })
}
