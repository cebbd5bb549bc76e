//! First-order operator-splitting (ADMM) solver for [`LmiProblem`]s.
//!
//! Writing every block constraint as `𝒜x + b = z`, `z ∈ 𝕊₊` (with each block
//! half-vectorized), one iteration is
//!
//! ```text
//! x⁺ = argmin cᵀx + ρ/2 ‖𝒜x + b − z + u‖² + ρσ/2 ‖x − x‖²
//! v  = α(𝒜x⁺ + b) + (1 − α) z
//! z⁺ = Π_𝕊₊(v + u)                    (per block, in parallel)
//! u⁺ = u + v − z⁺
//! ```
//!
//! The x-step matrix `𝒜ᵀ𝒜 + σI` does not depend on ρ and is factored once.
//! At a fixed point `y = −ρu` is a dual certificate: `y ⪰ 0`, `𝒜ᵀy = c`.

mod profile;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use nalgebra::DMatrix;

use crate::matrix::{psd_project, psd_project_from, smat, svec, svec_index, svec_len, SymMatrix};
use crate::sdp::{LmiProblem, SdpSolution, Sense, SolveStatus};
use profile::ProfileCholesky;

/// Proximal weight on the x-step; keeps the factorization definite when the
/// constraint map is rank deficient.
const PROXIMAL_SIGMA: f64 = 1e-6;
/// Residuals are evaluated (and the stopping test run) every this many iterations.
const CHECK_EVERY: usize = 10;
const RHO_UPDATE_EVERY: usize = 100;
const INFEASIBILITY_WINDOW: usize = 1000;
const RUIZ_PASSES: usize = 10;
/// Below this many `Σ d³` flops per projection the thread pool costs more than it saves.
const PARALLEL_MIN_WORK: usize = 20_000;
/// Eigenbases carried between projections are reset this often so that
/// rounding cannot accumulate in them.
const BASIS_RESET_EVERY: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub rho: f64,
    pub alpha: f64,
    pub max_iters: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub adaptive_rho: bool,
    /// Record a trace row every this many iterations (0 disables tracing).
    pub trace_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 1.0,
            alpha: 1.6,
            max_iters: 50_000,
            tol_abs: 1e-8,
            tol_rel: 1e-7,
            adaptive_rho: true,
            trace_every: 0,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::Input("rho must be positive".into()));
        }
        if !(1.0..2.0).contains(&self.alpha) {
            return Err(Error::Input("alpha must lie in [1, 2)".into()));
        }
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return Err(Error::Input("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
}

impl SolveTrace {
    /// Writes `iter,primal_res,dual_res,objective`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "iter,primal_res,dual_res,objective")?;
        for r in &self.rows {
            writeln!(out, "{},{:.16e},{:.16e},{:.16e}", r.iter, r.primal_res, r.dual_res, r.objective)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Primal and dual residuals in the flattened space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residuals {
    /// `‖F(x) − Z‖_F` over all blocks.
    pub primal: f64,
    /// `ρ ‖𝒜ᵀ(Z − Z_prev)‖`.
    pub dual: f64,
}

/// Column-compressed constraint map plus block layout.
struct Operator {
    /// Per variable: `(row, value)` in stacked svec coordinates.
    cols: Vec<Vec<(usize, f64)>>,
    /// Per row: `(variable, value)`.
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    /// `(offset, dim)` of each block in the stacked vector.
    layout: Vec<(usize, usize)>,
    /// Whether block projections are worth spreading over the thread pool.
    parallel: bool,
}

impl Operator {
    fn new(prob: &LmiProblem) -> Self {
        let mut layout = Vec::with_capacity(prob.blocks.len());
        let mut off = 0;
        for blk in &prob.blocks {
            layout.push((off, blk.dim));
            off += svec_len(blk.dim);
        }
        let mut cols = vec![Vec::new(); prob.num_vars];
        let mut b = Vec::with_capacity(off);
        for (blk, &(o, _)) in prob.blocks.iter().zip(&layout) {
            b.extend(svec(&blk.constant));
            for (var, f) in &blk.coeffs {
                for &(i, j, v) in &f.entries {
                    let val = if i == j { v } else { v * std::f64::consts::SQRT_2 };
                    cols[*var].push((o + svec_index(i, j), val));
                }
            }
        }
        let work: usize = layout.iter().map(|&(_, d)| d * d * d).sum();
        let parallel = rayon::current_num_threads() > 1 && layout.len() > 1 && work >= PARALLEL_MIN_WORK;
        let mut op = Operator { cols, rows: Vec::new(), b, layout, parallel };
        op.rebuild_rows();
        op
    }

    fn rebuild_rows(&mut self) {
        let mut rows = vec![Vec::new(); self.b.len()];
        for (var, col) in self.cols.iter().enumerate() {
            for &(r, a) in col {
                rows[r].push((var, a));
            }
        }
        self.rows = rows;
    }

    fn dim(&self) -> usize {
        self.b.len()
    }

    /// Ruiz equilibration. Columns get individual factors, rows one factor
    /// per block (a positive multiple of a PSD block stays PSD). Returns
    /// `(d, e)` with the scaled map `diag(e) 𝒜 diag(d)` stored in place.
    fn equilibrate(&mut self, passes: usize) -> (Vec<f64>, Vec<f64>) {
        let clamp = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
        let mut d = vec![1.0; self.cols.len()];
        let mut e = vec![1.0; self.dim()];
        let block_of: Vec<usize> = self
            .layout
            .iter()
            .enumerate()
            .flat_map(|(bi, &(_, dim))| std::iter::repeat_n(bi, svec_len(dim)))
            .collect();
        for _ in 0..passes {
            let mut block_norm = vec![0.0f64; self.layout.len()];
            for (j, col) in self.cols.iter_mut().enumerate() {
                let cn = clamp(col.iter().fold(0.0f64, |m, &(_, a)| m.max(a.abs())));
                let s = 1.0 / cn.sqrt();
                d[j] *= s;
                for (r, a) in col.iter_mut() {
                    *a *= s;
                    let bn = &mut block_norm[block_of[*r]];
                    *bn = bn.max(a.abs());
                }
            }
            let block_scale: Vec<f64> = block_norm.iter().map(|&n| 1.0 / clamp(n).sqrt()).collect();
            for col in self.cols.iter_mut() {
                for (r, a) in col.iter_mut() {
                    *a *= block_scale[block_of[*r]];
                }
            }
            for (r, er) in e.iter_mut().enumerate() {
                *er *= block_scale[block_of[r]];
                self.b[r] *= block_scale[block_of[r]];
            }
        }
        self.rebuild_rows();
        (d, e)
    }

    /// `out = 𝒜x`.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(v, a)| a * x[v]).sum();
        }
    }

    /// `out = 𝒜ᵀy`.
    fn apply_t(&self, y: &[f64], out: &mut [f64]) {
        for (o, col) in out.iter_mut().zip(&self.cols) {
            *o = col.iter().map(|&(r, a)| a * y[r]).sum();
        }
    }

    fn factor(&self, sigma: f64) -> Result<ProfileCholesky> {
        let p = self.cols.len();
        let mut lower: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); p];
        for row in &self.rows {
            for &(i, ai) in row {
                for &(j, aj) in row {
                    if j <= i {
                        *lower[i].entry(j).or_insert(0.0) += ai * aj;
                    }
                }
            }
        }
        for (i, r) in lower.iter_mut().enumerate() {
            *r.entry(i).or_insert(0.0) += sigma;
        }
        let rows: Vec<Vec<(usize, f64)>> = lower.into_iter().map(|r| r.into_iter().collect()).collect();
        ProfileCholesky::factor(&rows)
    }

    fn project(&self, v: &mut [f64]) -> Result<()> {
        self.chunks(v).into_par_iter().try_for_each(|(chunk, d)| {
            chunk.copy_from_slice(&svec(&psd_project(&smat(chunk, d))?));
            Ok(())
        })
    }

    /// Projection seeded with, and updating, each block's last eigenbasis.
    fn project_warm(&self, v: &mut [f64], bases: &mut [DMatrix<f64>]) -> Result<()> {
        let one = |((chunk, d), basis): ((&mut [f64], usize), &mut DMatrix<f64>)| -> Result<()> {
            let (pm, vectors) = psd_project_from(&smat(chunk, d), basis)?;
            chunk.copy_from_slice(&svec(&pm));
            *basis = vectors;
            Ok(())
        };
        let chunks = self.chunks(v);
        if self.parallel {
            chunks.into_par_iter().zip(bases.par_iter_mut()).try_for_each(one)
        } else {
            chunks.into_iter().zip(bases.iter_mut()).try_for_each(one)
        }
    }

    fn chunks<'a>(&self, v: &'a mut [f64]) -> Vec<(&'a mut [f64], usize)> {
        let mut chunks = Vec::with_capacity(self.layout.len());
        let mut rest = v;
        for &(_, d) in &self.layout {
            let (head, tail) = rest.split_at_mut(svec_len(d));
            chunks.push((head, d));
            rest = tail;
        }
        chunks
    }

    fn unstack(&self, v: &[f64]) -> Vec<SymMatrix> {
        self.layout.iter().map(|&(o, d)| smat(&v[o..o + svec_len(d)], d)).collect()
    }

    fn stack(&self, blocks: &[SymMatrix]) -> Result<Vec<f64>> {
        if blocks.len() != self.layout.len() {
            return Err(Error::Dimension(format!("{} blocks given, problem has {}", blocks.len(), self.layout.len())));
        }
        let mut out = Vec::with_capacity(self.dim());
        for (blk, &(_, d)) in blocks.iter().zip(&self.layout) {
            if blk.dim() != d {
                return Err(Error::Dimension(format!("block of size {} where {d} expected", blk.dim())));
            }
            out.extend(svec(blk));
        }
        Ok(out)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖F(x) − Z‖_F` and `ρ‖𝒜ᵀ(Z − Z_prev)‖` for block-structured slacks.
pub fn residuals(prob: &LmiProblem, x: &[f64], z: &[SymMatrix], z_prev: &[SymMatrix], rho: f64) -> Result<Residuals> {
    if x.len() != prob.num_vars {
        return Err(Error::Dimension(format!("x has {} entries, problem has {}", x.len(), prob.num_vars)));
    }
    let op = Operator::new(prob);
    let zs = op.stack(z)?;
    let zp = op.stack(z_prev)?;
    let mut ax = vec![0.0; op.dim()];
    op.apply(x, &mut ax);
    let primal = norm(&ax.iter().zip(&op.b).zip(&zs).map(|((a, b), z)| a + b - z).collect::<Vec<_>>());
    let diff: Vec<f64> = zs.iter().zip(&zp).map(|(a, b)| a - b).collect();
    let mut at = vec![0.0; prob.num_vars];
    op.apply_t(&diff, &mut at);
    Ok(Residuals { primal, dual: rho * norm(&at) })
}

pub fn solve(prob: &LmiProblem, cfg: &SolverConfig) -> Result<SdpSolution> {
    solve_traced(prob, cfg).map(|(s, _)| s)
}

struct Iterate {
    x: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
    rho: f64,
    primal: f64,
    dual: f64,
    merit: f64,
}

/// Runs the splitting iteration; deterministic for identical inputs.
///
/// The iteration runs on an equilibrated copy of the problem; residuals,
/// objective values and stopping tests are all expressed in the original units.
pub fn solve_traced(prob: &LmiProblem, cfg: &SolverConfig) -> Result<(SdpSolution, SolveTrace)> {
    cfg.check()?;
    prob.check()?;
    let unscaled_b = Operator::new(prob).b;
    let mut op = Operator::new(prob);
    let (d, e) = op.equilibrate(RUIZ_PASSES);
    let p = prob.num_vars;
    let dim = op.dim();
    let c: Vec<f64> = match prob.sense {
        Sense::Minimize => prob.objective.clone(),
        Sense::Maximize => prob.objective.iter().map(|v| -v).collect(),
    };
    let c_max = c.iter().zip(&d).fold(0.0f64, |m, (ci, di)| m.max((ci * di).abs()));
    let cost_scale = if c_max < 1e-4 { 1.0 } else { 1.0 / c_max.min(1e4) };
    let c_hat: Vec<f64> = c.iter().zip(&d).map(|(ci, di)| cost_scale * ci * di).collect();
    let chol = op.factor(PROXIMAL_SIGMA)?;

    let mut rho = cfg.rho;
    let mut x = vec![0.0; p];
    let mut z = vec![0.0; dim];
    let mut u = vec![0.0; dim];
    let mut z_prev = vec![0.0; dim];
    let mut ax = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut rhs = vec![0.0; p];
    let mut tmp = vec![0.0; dim];
    let mut at = vec![0.0; p];
    let identities: Vec<DMatrix<f64>> = op.layout.iter().map(|&(_, d)| DMatrix::identity(d, d)).collect();
    let mut bases = identities.clone();

    let b_norm = norm(&unscaled_b);
    let c_norm = norm(&c);
    let mut trace = SolveTrace::default();
    let mut best: Option<Iterate> = None;
    let mut status = SolveStatus::MaxIters;
    let mut last_rho_update = 0;
    let mut checkpoint: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let mut final_res = (f64::INFINITY, f64::INFINITY);
    let sign = if prob.sense == Sense::Maximize { -1.0 } else { 1.0 };

    for it in 1..=cfg.max_iters {
        iterations = it;
        // x-step
        for i in 0..dim {
            tmp[i] = op.b[i] - z[i] + u[i];
        }
        op.apply_t(&tmp, &mut at);
        for i in 0..p {
            rhs[i] = PROXIMAL_SIGMA * x[i] - c_hat[i] / rho - at[i];
        }
        chol.solve_in_place(&mut rhs);
        x.copy_from_slice(&rhs);

        // z-step with over-relaxation
        op.apply(&x, &mut ax);
        for i in 0..dim {
            ax[i] += op.b[i];
            v[i] = cfg.alpha * ax[i] + (1.0 - cfg.alpha) * z[i];
        }
        z_prev.copy_from_slice(&z);
        for i in 0..dim {
            z[i] = v[i] + u[i];
        }
        if it % BASIS_RESET_EVERY == 0 {
            bases.clone_from(&identities);
        }
        op.project_warm(&mut z, &mut bases)?;
        for i in 0..dim {
            u[i] += v[i] - z[i];
        }

        let trace_now = cfg.trace_every > 0 && it % cfg.trace_every == 0;
        let check_now = it % CHECK_EVERY == 0 || it == cfg.max_iters;
        if !check_now && !trace_now {
            continue;
        }

        // Residuals in original units: 𝒜x + b − z = E⁻¹(Âx̂ + b̂ − ẑ) and
        // ρ𝒜ᵀ(z − z_prev) ≈ D⁻¹ ρÂᵀ(ẑ − ẑ_prev) / c_s.
        for i in 0..dim {
            tmp[i] = (ax[i] - z[i]) / e[i];
        }
        let r_pri = norm(&tmp);
        for i in 0..dim {
            tmp[i] = z[i] - z_prev[i];
        }
        op.apply_t(&tmp, &mut at);
        let r_dual = rho * at.iter().zip(&d).map(|(a, di)| (a / di).powi(2)).sum::<f64>().sqrt() / cost_scale;
        final_res = (r_pri, r_dual);

        let pobj = dot(&c_hat, &x) / cost_scale;
        if trace_now {
            trace.rows.push(TraceRow { iter: it, primal_res: r_pri, dual_res: r_dual, objective: sign * pobj + prob.offset });
        }
        if !check_now {
            continue;
        }

        for i in 0..dim {
            tmp[i] = (ax[i] - op.b[i]) / e[i];
        }
        let ax_norm = norm(&tmp);
        let z_norm = z.iter().zip(&e).map(|(zi, ei)| (zi / ei).powi(2)).sum::<f64>().sqrt();
        let eps_pri = cfg.tol_abs * (dim as f64).sqrt() + cfg.tol_rel * ax_norm.max(z_norm).max(b_norm);
        op.apply_t(&u, &mut at);
        let aty_norm = rho * at.iter().zip(&d).map(|(a, di)| (a / di).powi(2)).sum::<f64>().sqrt() / cost_scale;
        let eps_dual = cfg.tol_abs * (p.max(1) as f64).sqrt() + cfg.tol_rel * aty_norm.max(c_norm);
        let dobj = rho * dot(&op.b, &u) / cost_scale;
        let gap = (pobj - dobj).abs();
        let eps_gap = cfg.tol_abs + cfg.tol_rel * (pobj.abs() + dobj.abs());

        let merit = (r_pri / eps_pri).max(r_dual / eps_dual);
        let snapshot = |merit| Iterate { x: x.clone(), z: z.clone(), u: u.clone(), rho, primal: r_pri, dual: r_dual, merit };
        if r_pri <= eps_pri && r_dual <= eps_dual && gap <= eps_gap {
            status = SolveStatus::Optimal;
            best = Some(snapshot(merit));
            break;
        }
        if best.as_ref().is_none_or(|b| merit < b.merit) {
            best = Some(snapshot(merit));
        }

        // Divergence of the scaled dual iterate along a direction y with
        // 𝒜ᵀy ≈ 0, y ⪰ 0 and bᵀy < 0 signals primal infeasibility.
        if it % INFEASIBILITY_WINDOW == 0 {
            if let Some(old) = &checkpoint {
                let grown = norm(&u) >= 2.0 * norm(old);
                let dir: Vec<f64> = old.iter().zip(&u).map(|(o, n)| o - n).collect();
                let dn = norm(&dir);
                if grown && dn > 0.0 && r_pri > eps_pri {
                    let y: Vec<f64> = dir.iter().map(|d| d / dn).collect();
                    op.apply_t(&y, &mut at);
                    let aty = norm(&at);
                    let by = dot(&op.b, &y);
                    let mut proj = y.clone();
                    op.project(&mut proj)?;
                    let cone_gap = norm(&proj.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
                    if by < -1e-6 && aty <= 1e-4 * by.abs() && cone_gap <= 1e-4 {
                        status = SolveStatus::InfeasibleSuspected;
                        break;
                    }
                }
            }
            checkpoint = Some(u.clone());
        }

        if cfg.adaptive_rho && it - last_rho_update >= RHO_UPDATE_EVERY {
            let ratio = (r_pri / eps_pri) / (r_dual / eps_dual).max(f64::MIN_POSITIVE);
            let factor = if ratio > 10.0 {
                2.0
            } else if ratio < 0.1 {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                for ui in u.iter_mut() {
                    *ui /= factor;
                }
                if let Some(old) = checkpoint.as_mut() {
                    for oi in old.iter_mut() {
                        *oi /= factor;
                    }
                }
                last_rho_update = it;
            }
        }
    }

    let last = Iterate { x, z, u, rho, primal: final_res.0, dual: final_res.1, merit: f64::INFINITY };
    let chosen = match status {
        SolveStatus::InfeasibleSuspected => last,
        _ => best.unwrap_or(last),
    };
    let x: Vec<f64> = chosen.x.iter().zip(&d).map(|(xi, di)| xi * di).collect();
    let z: Vec<f64> = chosen.z.iter().zip(&e).map(|(zi, ei)| zi / ei).collect();
    let y: Vec<f64> = chosen.u.iter().zip(&e).map(|(ui, ei)| -chosen.rho * ui * ei / cost_scale).collect();
    let sol = SdpSolution {
        objective_value: prob.objective_value(&x),
        block_slacks: op.unstack(&z),
        block_duals: op.unstack(&y),
        x,
        status,
        primal_residual: chosen.primal,
        dual_residual: chosen.dual,
        iterations,
    };
    Ok((sol, trace))
}
