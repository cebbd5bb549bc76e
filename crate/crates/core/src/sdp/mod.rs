//! Linear matrix inequality problems in standard form
//!
//! ```text
//! minimize / maximize   cᵀx + offset
//! subject to            F₀ʲ + Σᵢ xᵢ Fᵢʲ ⪰ 0     for every block j
//! ```
//!
//! over a flat vector of scalar unknowns. Structured unknowns (symmetric or
//! general matrices) are recorded as named [`VarGroup`]s. Symmetric unknowns are
//! half-vectorized with √2-scaled off-diagonals, so the flat inner product of two
//! symmetric variables equals their trace inner product.

mod builders;
mod listing;
mod recover;
mod schur;

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{svec_index, SymMatrix};
use crate::model::Partition;

pub use builders::{build_decentralized_sdp, build_dual_sdp, build_dual_sdp_tiebreak, build_primal_sdp, dual_objective};
pub use listing::{read_listing, write_listing};
pub use recover::{dual_multipliers, primal_covariances, recover_gains};
pub use schur::extended_schur_block;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Sparse symmetric coefficient matrix, upper-triangle triplets `(i, j, v)` with `i <= j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSym {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let dim = m.nrows();
        let mut entries = Vec::new();
        for j in 0..dim {
            for i in 0..=j {
                if m[(i, j)] != 0.0 {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        SparseSym { dim, entries }
    }

    pub fn to_dense(&self) -> SymMatrix {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        SymMatrix::symmetrize(m)
    }
}

/// One PSD constraint `F₀ + Σ xᵢ Fᵢ ⪰ 0`.
#[derive(Clone, Debug)]
pub struct LmiBlock {
    pub name: String,
    pub dim: usize,
    pub constant: SymMatrix,
    /// `(variable index, Fᵢ)`, sorted by index.
    pub coeffs: Vec<(usize, SparseSym)>,
}

impl LmiBlock {
    pub fn evaluate(&self, x: &[f64]) -> SymMatrix {
        let mut m = self.constant.as_matrix().clone();
        for (var, f) in &self.coeffs {
            let xv = x[*var];
            for &(i, j, v) in &f.entries {
                m[(i, j)] += xv * v;
                if i != j {
                    m[(j, i)] += xv * v;
                }
            }
        }
        SymMatrix::symmetrize(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VarKind {
    /// Half-vectorized symmetric matrix; `indices` follow svec order.
    Symmetric { dim: usize },
    /// General matrix; `entries[r * cols + c]` is the flat index, or `None`
    /// for a structural zero.
    General { rows: usize, cols: usize, entries: Vec<Option<usize>> },
}

/// A named structured unknown.
#[derive(Clone, Debug, PartialEq)]
pub struct VarGroup {
    pub name: String,
    pub kind: VarKind,
    /// Flat indices owned by this group, ascending.
    pub indices: Vec<usize>,
}

/// Which builder produced a problem; drives gain recovery and extraction.
#[derive(Clone, Debug, PartialEq)]
pub enum LmiKind {
    Primal { n: usize, m: usize, horizon: usize },
    Dual { n: usize, m: usize, horizon: usize },
    Decentralized { n: usize, m: usize, horizon: usize, partition: Partition },
    Generic,
}

#[derive(Clone, Debug)]
pub struct LmiProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub offset: f64,
    pub sense: Sense,
    pub blocks: Vec<LmiBlock>,
    pub groups: Vec<VarGroup>,
    pub kind: LmiKind,
}

impl LmiProblem {
    pub fn group(&self, name: &str) -> Option<&VarGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// `cᵀx + offset`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.offset
    }

    pub fn evaluate_blocks(&self, x: &[f64]) -> Vec<SymMatrix> {
        self.blocks.iter().map(|b| b.evaluate(x)).collect()
    }

    /// Value of a symmetric group.
    pub fn sym_value(&self, x: &[f64], name: &str) -> Result<SymMatrix> {
        let g = self.group(name).ok_or_else(|| Error::Input(format!("no variable group {name}")))?;
        match g.kind {
            VarKind::Symmetric { dim } => {
                let v: Vec<f64> = g.indices.iter().map(|&i| x[i]).collect();
                Ok(crate::matrix::smat(&v, dim))
            }
            _ => Err(Error::Input(format!("{name} is not symmetric"))),
        }
    }

    /// Value of a general group, with structural zeros filled in.
    pub fn mat_value(&self, x: &[f64], name: &str) -> Result<DMatrix<f64>> {
        let g = self.group(name).ok_or_else(|| Error::Input(format!("no variable group {name}")))?;
        match &g.kind {
            VarKind::General { rows, cols, entries } => Ok(DMatrix::from_fn(*rows, *cols, |r, c| {
                entries[r * cols + c].map_or(0.0, |i| x[i])
            })),
            _ => Err(Error::Input(format!("{name} is not a general matrix"))),
        }
    }

    /// Independent feasibility re-check: the most negative eigenvalue of any
    /// block `F(x)`, relative to `1 + ‖F(x)‖_max` (0 when every block is PSD).
    pub fn max_violation(&self, x: &[f64]) -> Result<f64> {
        let mut worst = 0.0f64;
        for b in self.evaluate_blocks(x) {
            let min = b.min_eigenvalue()?;
            worst = worst.max(-min / (1.0 + b.max_abs()));
        }
        Ok(worst)
    }

    pub fn check(&self) -> Result<()> {
        if self.objective.len() != self.num_vars {
            return Err(Error::Dimension("objective length differs from variable count".into()));
        }
        let mut owner = vec![0usize; self.num_vars];
        for g in &self.groups {
            for &i in &g.indices {
                if i >= self.num_vars {
                    return Err(Error::Dimension(format!("group {} references variable {i}", g.name)));
                }
                owner[i] += 1;
            }
        }
        if !self.groups.is_empty() {
            if let Some(i) = owner.iter().position(|&c| c != 1) {
                return Err(Error::Input(format!("variable {i} belongs to {} groups", owner[i])));
            }
        }
        for b in &self.blocks {
            if b.constant.dim() != b.dim {
                return Err(Error::Dimension(format!("block {} constant has wrong size", b.name)));
            }
            for (var, f) in &b.coeffs {
                if *var >= self.num_vars || f.dim != b.dim {
                    return Err(Error::Dimension(format!("block {} has a malformed coefficient", b.name)));
                }
                if f.entries.iter().any(|&(i, j, _)| i > j || j >= b.dim) {
                    return Err(Error::Dimension(format!("block {} has an out-of-triangle entry", b.name)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    InfeasibleSuspected,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub x: Vec<f64>,
    /// Projected slack `Z_j` for each block.
    pub block_slacks: Vec<SymMatrix>,
    /// Dual matrices `Y_j ⪰ 0` with `Σ_j ⟨Y_j, F_iʲ⟩ = c_i` at optimality
    /// (for the minimization form).
    pub block_duals: Vec<SymMatrix>,
    pub objective_value: f64,
    pub status: SolveStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

/// Symmetric unknown: flat indices start at `base`, svec order.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SymVar {
    base: usize,
    dim: usize,
}

impl SymVar {
    /// `(flat index, i, j)` for every svec coordinate.
    fn coords(self) -> impl Iterator<Item = (usize, usize, usize)> {
        (0..self.dim).flat_map(move |j| (0..=j).map(move |i| (self.base + svec_index(i, j), i, j)))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct MatVar {
    rows: usize,
    cols: usize,
    entries: Vec<Option<usize>>,
}

impl MatVar {
    fn present(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.rows)
            .flat_map(move |r| (0..self.cols).map(move |c| (r, c)))
            .filter_map(move |(r, c)| self.entries[r * self.cols + c].map(|i| (i, r, c)))
    }
}

/// Affine symmetric matrix expression under construction.
pub(crate) struct AffineSym {
    dim: usize,
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl AffineSym {
    pub(crate) fn new(dim: usize) -> Self {
        AffineSym { dim, constant: DMatrix::zeros(dim, dim), terms: BTreeMap::new() }
    }

    fn term(&mut self, var: usize) -> &mut DMatrix<f64> {
        let dim = self.dim;
        self.terms.entry(var).or_insert_with(|| DMatrix::zeros(dim, dim))
    }

    /// Adds the symmetric matrix `m` as the diagonal block at `offset`.
    pub(crate) fn add_constant(&mut self, offset: usize, m: &DMatrix<f64>) {
        let mut v = self.constant.view_mut((offset, offset), m.shape());
        v += m;
    }

    /// Adds `T S Tᵀ` as the diagonal block at `offset`, `S` a symmetric unknown.
    pub(crate) fn add_sym_congruence(&mut self, offset: usize, s: SymVar, t: &DMatrix<f64>, scale: f64) {
        let rt = std::f64::consts::FRAC_1_SQRT_2;
        for (var, i, j) in s.coords() {
            let ti = t.column(i);
            let tj = t.column(j);
            let coeff = if i == j {
                ti * ti.transpose() * scale
            } else {
                (ti * tj.transpose() + tj * ti.transpose()) * (rt * scale)
            };
            let mut v = self.term(var).view_mut((offset, offset), coeff.shape());
            v += &coeff;
        }
    }

    /// Adds `scale · S` on the diagonal block at `offset`.
    pub(crate) fn add_sym(&mut self, offset: usize, s: SymVar, scale: f64) {
        let t = DMatrix::identity(s.dim, s.dim);
        self.add_sym_congruence(offset, s, &t, scale);
    }

    /// Places `scale · X` at rows `row0..`, columns `col0..` and `scale · Xᵀ`
    /// at the mirrored position. Requires the two regions to be disjoint.
    pub(crate) fn add_mat_offdiag(&mut self, row0: usize, col0: usize, x: &MatVar, scale: f64) {
        for (var, r, c) in x.present() {
            let t = self.term(var);
            t[(row0 + r, col0 + c)] += scale;
            t[(col0 + c, row0 + r)] += scale;
        }
    }

    /// Adds `scale · (X + Xᵀ)` on the diagonal block at `offset` (X square).
    pub(crate) fn add_mat_sym_part(&mut self, offset: usize, x: &MatVar, scale: f64) {
        for (var, r, c) in x.present() {
            let t = self.term(var);
            t[(offset + r, offset + c)] += scale;
            t[(offset + c, offset + r)] += scale;
        }
    }

    fn finish(self, name: String) -> LmiBlock {
        let coeffs = self
            .terms
            .into_iter()
            .map(|(var, m)| {
                debug_assert!((&m - m.transpose()).amax() < 1e-12, "asymmetric coefficient in {name}");
                (var, SparseSym::from_dense(&m))
            })
            .filter(|(_, s)| !s.entries.is_empty())
            .collect();
        LmiBlock { name, dim: self.dim, constant: SymMatrix::symmetrize(self.constant), coeffs }
    }
}

/// Allocates flat variables and collects blocks.
pub(crate) struct LmiBuilder {
    num_vars: usize,
    groups: Vec<VarGroup>,
    objective: Vec<f64>,
    offset: f64,
    blocks: Vec<LmiBlock>,
}

impl LmiBuilder {
    pub(crate) fn new() -> Self {
        LmiBuilder { num_vars: 0, groups: Vec::new(), objective: Vec::new(), offset: 0.0, blocks: Vec::new() }
    }

    pub(crate) fn sym_var(&mut self, name: String, dim: usize) -> SymVar {
        let base = self.num_vars;
        let len = crate::matrix::svec_len(dim);
        self.num_vars += len;
        self.objective.resize(self.num_vars, 0.0);
        self.groups.push(VarGroup {
            name,
            kind: VarKind::Symmetric { dim },
            indices: (base..base + len).collect(),
        });
        SymVar { base, dim }
    }

    /// General `rows × cols` unknown; entries where `keep(r, c)` is false are
    /// structural zeros.
    pub(crate) fn mat_var(
        &mut self,
        name: String,
        rows: usize,
        cols: usize,
        keep: impl Fn(usize, usize) -> bool,
    ) -> MatVar {
        let mut entries = Vec::with_capacity(rows * cols);
        let mut indices = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if keep(r, c) {
                    entries.push(Some(self.num_vars));
                    indices.push(self.num_vars);
                    self.num_vars += 1;
                } else {
                    entries.push(None);
                }
            }
        }
        self.objective.resize(self.num_vars, 0.0);
        self.groups.push(VarGroup {
            name,
            kind: VarKind::General { rows, cols, entries: entries.clone() },
            indices,
        });
        MatVar { rows, cols, entries }
    }

    /// Adds `Tr(C S)` to the objective.
    pub(crate) fn objective_sym(&mut self, s: SymVar, c: &SymMatrix) {
        for (var, i, j) in s.coords() {
            let w = if i == j { c[(i, i)] } else { c[(i, j)] * std::f64::consts::SQRT_2 };
            self.objective[var] += w;
        }
    }

    pub(crate) fn add_offset(&mut self, v: f64) {
        self.offset += v;
    }

    pub(crate) fn push(&mut self, name: String, expr: AffineSym) {
        self.blocks.push(expr.finish(name));
    }

    pub(crate) fn finish(self, sense: Sense, kind: LmiKind) -> LmiProblem {
        LmiProblem {
            num_vars: self.num_vars,
            objective: self.objective,
            offset: self.offset,
            sense,
            blocks: self.blocks,
            groups: self.groups,
            kind,
        }
    }
}
