//! End-to-end controller design: build, solve, recover gains, and re-evaluate
//! the recovered schedule exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::model::{evaluate_gains, CovarianceTrajectory, GainSchedule, LqgProblem, Partition};
use crate::riccati::{build_certificates, solve_riccati};
use crate::sdp::{
    build_decentralized_sdp, build_dual_sdp_tiebreak, build_primal_sdp, dual_multipliers, dual_objective,
    primal_covariances, recover_gains, LmiProblem, SdpSolution, SolveStatus,
};
use crate::solver::{solve_traced, SolveTrace, SolverConfig};

/// Tie-break weight on `Σ Tr(P_k)` in the dual, relative to `Tr(W) / n`.
/// Any positive value selects the same point; see [`build_dual_sdp_tiebreak`].
pub const DUAL_TIEBREAK: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Riccati,
    Primal,
    Dual,
    Decentralized,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Riccati => "riccati",
            Method::Primal => "primal",
            Method::Dual => "dual",
            Method::Decentralized => "decentralized",
        }
    }
}

/// Solver bookkeeping for SDP-based designs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Largest negative eigenvalue over all blocks at the returned `x`,
    /// recomputed from the problem data alone.
    pub max_violation: f64,
    pub num_vars: usize,
    pub num_blocks: usize,
}

#[derive(Clone, Debug)]
pub struct Design {
    pub method: Method,
    /// Optimal value of the problem the method solves: `J_p` for Riccati and
    /// the primal SDP, `J_d` for the dual, the relaxation bound for the
    /// decentralized SDP.
    pub objective_value: f64,
    pub gains: Option<GainSchedule>,
    /// Exact cost of `gains`, from the covariance recursion.
    pub evaluated_cost: Option<f64>,
    /// Riccati: propagated `S_k`; primal and decentralized: the SDP's `S_k`.
    pub covariances: Option<CovarianceTrajectory>,
    /// Riccati: certificate `P_k`; dual: the SDP's `P_k`.
    pub multipliers: Option<Vec<SymMatrix>>,
    pub multipliers_bar: Option<Vec<SymMatrix>>,
    pub solver: Option<SolverStats>,
    pub trace: SolveTrace,
}

pub fn design_riccati(p: &LqgProblem) -> Result<Design> {
    let r = solve_riccati(p)?;
    let cert = build_certificates(p, &r)?;
    let (evaluated, _) = evaluate_gains(p, &r.gains)?;
    Ok(Design {
        method: Method::Riccati,
        objective_value: r.cost(p),
        evaluated_cost: Some(evaluated),
        covariances: Some(cert.s),
        multipliers: Some(cert.p),
        multipliers_bar: Some(cert.p_bar),
        gains: Some(r.gains),
        solver: None,
        trace: SolveTrace::default(),
    })
}

pub fn design_primal(p: &LqgProblem, cfg: &SolverConfig) -> Result<Design> {
    let lmi = build_primal_sdp(p)?;
    let (sol, trace) = solve_traced(&lmi, cfg)?;
    let covariances = primal_covariances(&lmi, &sol.x)?;
    finish(p, Method::Primal, &lmi, sol, trace, None, Some(covariances), None)
}

pub fn design_decentralized(p: &LqgProblem, part: &Partition, cfg: &SolverConfig) -> Result<Design> {
    let lmi = build_decentralized_sdp(p, part)?;
    let (sol, trace) = solve_traced(&lmi, cfg)?;
    let covariances = primal_covariances(&lmi, &sol.x)?;
    finish(p, Method::Decentralized, &lmi, sol, trace, None, Some(covariances), None)
}

/// Solves the dual with the `Σ Tr(P_k)` tie-break so that the returned
/// multipliers are the unique Riccati certificates; reports `J_d` alone.
pub fn design_dual(p: &LqgProblem, cfg: &SolverConfig) -> Result<Design> {
    let weight = DUAL_TIEBREAK * p.w.trace() / p.n() as f64;
    let lmi = build_dual_sdp_tiebreak(p, weight)?;
    let (sol, trace) = solve_traced(&lmi, cfg)?;
    let value = dual_objective(p, &lmi, &sol.x)?;
    let mult = dual_multipliers(&lmi, &sol.x)?;
    let bar = vec![SymMatrix::zeros(p.n() + p.m()); p.horizon];
    finish(p, Method::Dual, &lmi, sol, trace, Some(value), None, Some((mult, bar)))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &LqgProblem,
    method: Method,
    lmi: &LmiProblem,
    sol: SdpSolution,
    trace: SolveTrace,
    objective: Option<f64>,
    covariances: Option<CovarianceTrajectory>,
    multipliers: Option<(Vec<SymMatrix>, Vec<SymMatrix>)>,
) -> Result<Design> {
    // Gains are mandatory at an optimal point; from a max_iters iterate they
    // are reported when they can be recovered at all.
    let gains = match recover_gains(lmi, &sol) {
        Ok(g) => Some(g),
        Err(e @ Error::Recovery { .. }) if sol.status == SolveStatus::Optimal => return Err(e),
        Err(Error::Recovery { .. }) => None,
        Err(e) => return Err(e),
    };
    let evaluated_cost = gains.as_ref().map(|g| evaluate_gains(p, g).map(|(c, _)| c)).transpose()?;
    let stats = SolverStats {
        status: sol.status,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        max_violation: lmi.max_violation(&sol.x)?,
        num_vars: lmi.num_vars,
        num_blocks: lmi.blocks.len(),
    };
    let (multipliers, multipliers_bar) = match multipliers {
        Some((m, b)) => (Some(m), Some(b)),
        None => (None, None),
    };
    Ok(Design {
        method,
        objective_value: objective.unwrap_or(sol.objective_value),
        gains,
        evaluated_cost,
        covariances,
        multipliers,
        multipliers_bar,
        solver: Some(stats),
        trace,
    })
}
