//! Problem data, covariance propagation and the primal/dual cost functionals.
//!
//! The system is `x(k+1) = A x(k) + B u(k) + w(k)` with `x(0) ~ N(0, Wf)`,
//! `w(k) ~ N(0, W)` and linear state feedback `u(k) = F_k x(k)`. The joint
//! second moment `S_k = E[[x; u][x; u]ᵀ]` evolves through [`phi`], and the
//! expected cost is linear in the `S_k` ([`cost_primal`]).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{block_diag, sym_eig, SymMatrix, PSD_TOL};

/// Finite-horizon LQG problem data.
#[derive(Clone, Debug, PartialEq)]
pub struct LqgProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: SymMatrix,
    pub r: SymMatrix,
    pub qf: SymMatrix,
    pub w: SymMatrix,
    pub wf: SymMatrix,
    pub horizon: usize,
}

impl LqgProblem {
    /// Checks dimensional consistency only; weight definiteness is reported by
    /// [`validate`].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: SymMatrix,
        r: SymMatrix,
        qf: SymMatrix,
        w: SymMatrix,
        wf: SymMatrix,
        horizon: usize,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Dimension(what.to_string()))
            }
        };
        check(n > 0 && a.is_square(), "A must be square and non-empty")?;
        check(m > 0 && b.nrows() == n, "B must be n x m with m >= 1")?;
        check(q.dim() == n, "Q must be n x n")?;
        check(r.dim() == m, "R must be m x m")?;
        check(qf.dim() == n, "Qf must be n x n")?;
        check(w.dim() == n, "W must be n x n")?;
        check(wf.dim() == n, "Wf must be n x n")?;
        check(horizon > 0, "horizon must be positive")?;
        Ok(LqgProblem { a, b, q, r, qf, w, wf, horizon })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `[A B]`, n × (n+m).
    pub fn ab(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut out = DMatrix::zeros(n, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(&self.a);
        out.view_mut((0, n), (n, m)).copy_from(&self.b);
        out
    }

    /// `blkdiag(Q, R)`.
    pub fn stage_weight(&self) -> SymMatrix {
        SymMatrix::symmetrize(block_diag(&[self.q.as_matrix(), self.r.as_matrix()]))
    }

    /// `P_N = blkdiag(Qf, 0)`.
    pub fn terminal_multiplier(&self) -> SymMatrix {
        let zero = DMatrix::zeros(self.m(), self.m());
        SymMatrix::symmetrize(block_diag(&[self.qf.as_matrix(), &zero]))
    }

    /// Benchmark plant: two coupled 2-state subsystems with scalar inputs.
    pub fn example1() -> (LqgProblem, Partition) {
        let a11 = DMatrix::from_row_slice(2, 2, &[0.8220, -0.0898, -0.2389, 0.9358]);
        let a12 = DMatrix::from_row_slice(2, 2, &[0.4860, -0.1820, 0.1680, -0.3143]);
        let a21 = DMatrix::from_row_slice(2, 2, &[0.1891, -0.3195, 0.2067, -0.6610]);
        let a22 = DMatrix::from_row_slice(2, 2, &[-0.6404, 1.4540, 0.2067, -0.6610]);
        let b1 = DMatrix::from_row_slice(2, 1, &[-0.3505, -1.9788]);
        let b2 = DMatrix::from_row_slice(2, 1, &[-0.4901, -0.0515]);
        let part = Partition::new(vec![2, 2], vec![1, 1]).expect("static partition");
        let weights = Weights {
            q: SymMatrix::identity(4),
            r: SymMatrix::identity(2),
            qf: SymMatrix::identity(4),
            w: SymMatrix::scaled_identity(4, 0.01),
            wf: SymMatrix::identity(4),
            horizon: 30,
        };
        let p = assemble_interconnected(&[vec![a11, a12], vec![a21, a22]], &[b1, b2], weights, &part)
            .expect("static example data");
        (p, part)
    }
}

/// Weights, noise covariances and horizon, for [`assemble_interconnected`].
#[derive(Clone, Debug)]
pub struct Weights {
    pub q: SymMatrix,
    pub r: SymMatrix,
    pub qf: SymMatrix,
    pub w: SymMatrix,
    pub wf: SymMatrix,
    pub horizon: usize,
}

/// Subsystem partition of states and inputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub n_sizes: Vec<usize>,
    pub m_sizes: Vec<usize>,
}

impl Partition {
    pub fn new(n_sizes: Vec<usize>, m_sizes: Vec<usize>) -> Result<Self> {
        if n_sizes.is_empty() || n_sizes.len() != m_sizes.len() {
            return Err(Error::Input(format!(
                "partition needs equal, non-zero numbers of state and input blocks (got {} and {})",
                n_sizes.len(),
                m_sizes.len()
            )));
        }
        if n_sizes.iter().chain(&m_sizes).any(|&s| s == 0) {
            return Err(Error::Input("partition block sizes must be positive".into()));
        }
        Ok(Partition { n_sizes, m_sizes })
    }

    /// A single block covering everything.
    pub fn trivial(n: usize, m: usize) -> Self {
        Partition { n_sizes: vec![n], m_sizes: vec![m] }
    }

    pub fn blocks(&self) -> usize {
        self.n_sizes.len()
    }

    pub fn n(&self) -> usize {
        self.n_sizes.iter().sum()
    }

    pub fn m(&self) -> usize {
        self.m_sizes.iter().sum()
    }

    /// Row/column offsets of each state block.
    pub fn n_offsets(&self) -> Vec<usize> {
        offsets(&self.n_sizes)
    }

    pub fn m_offsets(&self) -> Vec<usize> {
        offsets(&self.m_sizes)
    }

    pub fn check(&self, p: &LqgProblem) -> Result<()> {
        if self.n() != p.n() || self.m() != p.m() {
            return Err(Error::Dimension(format!(
                "partition covers {}x{} but the problem is {}x{}",
                self.n(),
                self.m(),
                p.n(),
                p.m()
            )));
        }
        Ok(())
    }
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect()
}

/// Feedback gains `F_0 .. F_{N-1}`, each m × n.
#[derive(Clone, Debug, PartialEq)]
pub struct GainSchedule(pub Vec<DMatrix<f64>>);

impl GainSchedule {
    pub fn zeros(p: &LqgProblem) -> Self {
        GainSchedule(vec![DMatrix::zeros(p.m(), p.n()); p.horizon])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check(&self, p: &LqgProblem) -> Result<()> {
        if self.0.len() != p.horizon {
            return Err(Error::Dimension(format!(
                "gain schedule has {} entries, horizon is {}",
                self.0.len(),
                p.horizon
            )));
        }
        for (k, f) in self.0.iter().enumerate() {
            if f.nrows() != p.m() || f.ncols() != p.n() {
                return Err(Error::Dimension(format!(
                    "F_{k} is {}x{}, expected {}x{}",
                    f.nrows(),
                    f.ncols(),
                    p.m(),
                    p.n()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("F_{k} has non-finite entries")));
            }
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for GainSchedule {
    type Output = DMatrix<f64>;

    fn index(&self, k: usize) -> &DMatrix<f64> {
        &self.0[k]
    }
}

/// Joint state/input second moments `S_0 .. S_{N-1}`.
#[derive(Clone, Debug)]
pub struct CovarianceTrajectory(pub Vec<SymMatrix>);

/// One violated assumption.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub what: String,
    pub eigenvalue: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (eigenvalue {:e})", self.what, self.eigenvalue)
    }
}

/// Lists every violated weight assumption; empty iff the problem is valid.
pub fn validate(p: &LqgProblem) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |name: &str, m: &SymMatrix, strict: bool| match sym_eig(m) {
        Ok(d) => {
            let min = d.values[0];
            let scale = d.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let ok = if strict { min > PSD_TOL * scale } else { min >= -PSD_TOL * scale };
            if !ok {
                let kind = if strict { "positive definite" } else { "positive semidefinite" };
                out.push(Violation { what: format!("{name} not {kind}"), eigenvalue: min });
            }
        }
        Err(_) => out.push(Violation {
            what: format!("{name} has non-finite entries"),
            eigenvalue: f64::NAN,
        }),
    };
    check("Q", &p.q, false);
    check("Qf", &p.qf, false);
    check("R", &p.r, true);
    check("W", &p.w, true);
    check("Wf", &p.wf, true);
    if p.a.iter().chain(p.b.iter()).any(|v| !v.is_finite()) {
        out.push(Violation { what: "A or B has non-finite entries".into(), eigenvalue: f64::NAN });
    }
    out
}

/// Returns an input error listing all violations, if any.
pub fn ensure_valid(p: &LqgProblem) -> Result<()> {
    let report = validate(p);
    if report.is_empty() {
        Ok(())
    } else {
        let msgs: Vec<String> = report.iter().map(|v| v.to_string()).collect();
        Err(Error::Input(msgs.join("; ")))
    }
}

/// Builds `A` from the grid `a_blocks[i][j] = A_ij` and `B = diag(B_1, .., B_M)`.
pub fn assemble_interconnected(
    a_blocks: &[Vec<DMatrix<f64>>],
    b_blocks: &[DMatrix<f64>],
    weights: Weights,
    part: &Partition,
) -> Result<LqgProblem> {
    let mm = part.blocks();
    if a_blocks.len() != mm || b_blocks.len() != mm {
        return Err(Error::Dimension(format!("expected {mm} subsystems")));
    }
    let (n, m) = (part.n(), part.m());
    let (no, mo) = (part.n_offsets(), part.m_offsets());
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    for i in 0..mm {
        if a_blocks[i].len() != mm {
            return Err(Error::Dimension(format!("row {i} of A blocks has {} entries", a_blocks[i].len())));
        }
        for j in 0..mm {
            let blk = &a_blocks[i][j];
            if blk.shape() != (part.n_sizes[i], part.n_sizes[j]) {
                return Err(Error::Dimension(format!(
                    "A_{}{} is {}x{}, expected {}x{}",
                    i + 1,
                    j + 1,
                    blk.nrows(),
                    blk.ncols(),
                    part.n_sizes[i],
                    part.n_sizes[j]
                )));
            }
            a.view_mut((no[i], no[j]), blk.shape()).copy_from(blk);
        }
        let bi = &b_blocks[i];
        if bi.shape() != (part.n_sizes[i], part.m_sizes[i]) {
            return Err(Error::Dimension(format!(
                "B_{} is {}x{}, expected {}x{}",
                i + 1,
                bi.nrows(),
                bi.ncols(),
                part.n_sizes[i],
                part.m_sizes[i]
            )));
        }
        b.view_mut((no[i], mo[i]), bi.shape()).copy_from(bi);
    }
    LqgProblem::new(a, b, weights.q, weights.r, weights.qf, weights.w, weights.wf, weights.horizon)
}

/// `[I; F]`, (n+m) × n.
pub fn stack_identity(f: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = f.shape();
    let mut out = DMatrix::zeros(n + m, n);
    out.view_mut((0, 0), (n, n)).fill_with_identity();
    out.view_mut((n, 0), (m, n)).copy_from(f);
    out
}

/// `M = [A B] S [A B]ᵀ + W`, the one-step-ahead state covariance.
pub fn predicted_state_cov(s: &SymMatrix, p: &LqgProblem) -> SymMatrix {
    s.congruence(&p.ab()).add(&p.w)
}

/// Covariance propagation `Φ(F, S) = [I; F] ([A B] S [A B]ᵀ + W) [I; F]ᵀ`.
pub fn phi(f: &DMatrix<f64>, s: &SymMatrix, p: &LqgProblem) -> Result<SymMatrix> {
    check_gain(f, p)?;
    check_joint(s, p)?;
    Ok(predicted_state_cov(s, p).congruence(&stack_identity(f)))
}

/// `Γ(F, P) = [Aᵀ; Bᵀ] ([I; F]ᵀ P [I; F]) [A B] + blkdiag(Q, R)`.
pub fn gamma(f: &DMatrix<f64>, pm: &SymMatrix, p: &LqgProblem) -> Result<SymMatrix> {
    check_gain(f, p)?;
    check_joint(pm, p)?;
    let inner = pm.congruence(&stack_identity(f).transpose());
    Ok(inner.congruence(&p.ab().transpose()).add(&p.stage_weight()))
}

/// `[I; F₀] Wf [I; F₀]ᵀ`, the initial joint covariance.
pub fn initial_joint_cov(f0: &DMatrix<f64>, p: &LqgProblem) -> SymMatrix {
    p.wf.congruence(&stack_identity(f0))
}

/// `J_p = Tr(Qf ([A B] S_{N-1} [A B]ᵀ + W)) + Σ_k Tr(blkdiag(Q, R) S_k)`.
pub fn cost_primal(traj: &CovarianceTrajectory, p: &LqgProblem) -> Result<f64> {
    if traj.0.len() != p.horizon {
        return Err(Error::Dimension(format!(
            "trajectory has {} covariances, horizon is {}",
            traj.0.len(),
            p.horizon
        )));
    }
    for s in &traj.0 {
        check_joint(s, p)?;
    }
    let last = &traj.0[p.horizon - 1];
    let terminal = p.qf.dot(&predicted_state_cov(last, p));
    let stage = p.stage_weight();
    Ok(terminal + traj.0.iter().map(|s| stage.dot(s)).sum::<f64>())
}

/// `J_d = Tr([I;F₀] Wf [I;F₀]ᵀ P₀) + Σ_{k=1}^{N-1} Tr([I;F_k] W [I;F_k]ᵀ P_k) + Tr(W Qf)`.
///
/// `multipliers` holds `P_0 .. P_{N-1}`; the `k = N` term uses
/// `P_N = blkdiag(Qf, 0)` and reduces to `Tr(W Qf)` for any `F_N`.
pub fn cost_dual(multipliers: &[SymMatrix], gains: &GainSchedule, p: &LqgProblem) -> Result<f64> {
    if multipliers.len() != p.horizon {
        return Err(Error::Dimension(format!(
            "{} multipliers for horizon {}",
            multipliers.len(),
            p.horizon
        )));
    }
    gains.check(p)?;
    for pk in multipliers {
        check_joint(pk, p)?;
    }
    let mut total = initial_joint_cov(&gains[0], p).dot(&multipliers[0]);
    for k in 1..p.horizon {
        total += p.w.congruence(&stack_identity(&gains[k])).dot(&multipliers[k]);
    }
    Ok(total + p.w.dot(&p.qf))
}

/// Exact cost of a gain schedule by forward propagation of `S_k`.
pub fn evaluate_gains(p: &LqgProblem, gains: &GainSchedule) -> Result<(f64, CovarianceTrajectory)> {
    gains.check(p)?;
    let traj = propagate(p, gains);
    Ok((cost_primal(&traj, p)?, traj))
}

pub(crate) fn propagate(p: &LqgProblem, gains: &GainSchedule) -> CovarianceTrajectory {
    let mut covs = Vec::with_capacity(p.horizon);
    covs.push(initial_joint_cov(&gains[0], p));
    for k in 1..p.horizon {
        let next = predicted_state_cov(&covs[k - 1], p).congruence(&stack_identity(&gains[k]));
        covs.push(next);
    }
    CovarianceTrajectory(covs)
}

fn check_gain(f: &DMatrix<f64>, p: &LqgProblem) -> Result<()> {
    if f.shape() != (p.m(), p.n()) {
        return Err(Error::Dimension(format!(
            "gain is {}x{}, expected {}x{}",
            f.nrows(),
            f.ncols(),
            p.m(),
            p.n()
        )));
    }
    Ok(())
}

fn check_joint(s: &SymMatrix, p: &LqgProblem) -> Result<()> {
    if s.dim() != p.n() + p.m() {
        return Err(Error::Dimension(format!("joint matrix is {0}x{0}, expected {1}x{1}", s.dim(), p.n() + p.m())));
    }
    Ok(())
}
