//! Backward Riccati recursion, closed-form KKT certificates, and a residual
//! based KKT verifier for the relaxed (inequality) covariance problem.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{solve_spd, SymMatrix};
use crate::model::{
    cost_dual, cost_primal, ensure_valid, gamma, initial_joint_cov, phi, predicted_state_cov,
    propagate, CovarianceTrajectory, GainSchedule, LqgProblem,
};

/// Cost-to-go matrices and the optimal gain schedule.
#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    /// `value[k] = X_k` for `k = 0..=N`; `value[N] == Qf`.
    pub value: Vec<SymMatrix>,
    pub gains: GainSchedule,
}

impl RiccatiSolution {
    /// Optimal expected cost `Tr(X_0 Wf) + Σ_{k=1}^{N} Tr(X_k W)`.
    pub fn cost(&self, p: &LqgProblem) -> f64 {
        p.wf.dot(&self.value[0]) + self.value[1..].iter().map(|x| p.w.dot(x)).sum::<f64>()
    }
}

/// Primal/dual optimal point of the relaxed problem built from a Riccati solve.
#[derive(Clone, Debug)]
pub struct DualCertificate {
    /// Multipliers of the covariance constraints, `P_0 .. P_{N-1}`.
    pub p: Vec<SymMatrix>,
    /// Multipliers of `S_k ⪰ 0`; identically zero at the Riccati point.
    pub p_bar: Vec<SymMatrix>,
    pub s: CovarianceTrajectory,
}

/// Residuals of the KKT system. Every field is non-negative.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KktReport {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub slackness_residual: f64,
    pub stationarity_residual: f64,
    pub duality_gap: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        [
            self.primal_residual,
            self.dual_residual,
            self.slackness_residual,
            self.stationarity_residual,
            self.duality_gap,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn solve_riccati(p: &LqgProblem) -> Result<RiccatiSolution> {
    ensure_valid(p)?;
    let n_steps = p.horizon;
    let mut value = vec![p.qf.clone(); n_steps + 1];
    let mut gains = vec![DMatrix::zeros(p.m(), p.n()); n_steps];
    let (a, b) = (&p.a, &p.b);
    for k in (0..n_steps).rev() {
        let x_next = value[k + 1].as_matrix();
        let bx = b.transpose() * x_next;
        let r_bar = SymMatrix::symmetrize(p.r.as_matrix() + &bx * b);
        let bxa = &bx * a;
        let f = -solve_spd(&r_bar, &bxa).map_err(|e| Error::Numerical(format!("stage {k}: {e}")))?;
        // X_k = AᵀXA + Q + AᵀXB F, using F = −R̄⁻¹BᵀXA.
        let x = a.transpose() * x_next * a + p.q.as_matrix() + bxa.transpose() * &f;
        value[k] = SymMatrix::symmetrize(x);
        gains[k] = f;
    }
    Ok(RiccatiSolution { value, gains: GainSchedule(gains) })
}

/// `[[Q + AᵀXA, AᵀXB], [BᵀXA, R + BᵀXB]]` for a cost-to-go `X`.
pub fn multiplier_from_value(x: &SymMatrix, p: &LqgProblem) -> SymMatrix {
    x.congruence(&p.ab().transpose()).add(&p.stage_weight())
}

pub fn build_certificates(p: &LqgProblem, r: &RiccatiSolution) -> Result<DualCertificate> {
    r.gains.check(p)?;
    if r.value.len() != p.horizon + 1 {
        return Err(Error::Dimension("value sequence must have N+1 entries".into()));
    }
    let pk = (0..p.horizon).map(|k| multiplier_from_value(&r.value[k + 1], p)).collect();
    let dim = p.n() + p.m();
    Ok(DualCertificate {
        p: pk,
        p_bar: vec![SymMatrix::zeros(dim); p.horizon],
        s: propagate(p, &r.gains),
    })
}

/// Measures how far `(S, F, P, P̄)` is from satisfying the KKT system of the
/// relaxed covariance problem. Callers compare the residuals with their own
/// thresholds.
pub fn verify_kkt(
    p: &LqgProblem,
    s: &CovarianceTrajectory,
    gains: &GainSchedule,
    mult: &[SymMatrix],
    mult_bar: &[SymMatrix],
) -> Result<KktReport> {
    let n_steps = p.horizon;
    gains.check(p)?;
    if s.0.len() != n_steps || mult.len() != n_steps || mult_bar.len() != n_steps {
        return Err(Error::Dimension(format!(
            "expected {n_steps} covariances and multipliers, got {}, {} and {}",
            s.0.len(),
            mult.len(),
            mult_bar.len()
        )));
    }
    let n = p.n();
    let m = p.m();

    let mut report = KktReport::default();

    // Constraint slack g_k = (bound) − S_k, which must be ⪯ 0.
    for k in 0..n_steps {
        let bound = if k == 0 { initial_joint_cov(&gains[0], p) } else { phi(&gains[k], &s.0[k - 1], p)? };
        let g = bound.sub(&s.0[k]);
        report.primal_residual = report.primal_residual.max(g.max_eigenvalue()?.max(0.0));
        report.slackness_residual = report.slackness_residual.max(g.dot(&mult[k]).abs());
        report.slackness_residual = report.slackness_residual.max(s.0[k].dot(&mult_bar[k]).abs());
    }
    for s_k in &s.0 {
        report.primal_residual = report.primal_residual.max((-s_k.min_eigenvalue()?).max(0.0));
    }

    // Γ(F_k, P_k) − P̄_{k−1} = P_{k−1}, closing with Γ(0, P_N) at k = N.
    let zero_gain = DMatrix::zeros(m, n);
    for k in 1..=n_steps {
        let g = if k == n_steps {
            gamma(&zero_gain, &p.terminal_multiplier(), p)?
        } else {
            gamma(&gains[k], &mult[k], p)?
        };
        let dev = g.sub(&mult_bar[k - 1]).sub(&mult[k - 1]).max_abs();
        report.dual_residual = report.dual_residual.max(dev);
    }
    for pk in mult.iter().chain(mult_bar) {
        report.dual_residual = report.dual_residual.max((-pk.min_eigenvalue()?).max(0.0));
    }

    // ∂L/∂F_k = 2 (P_{k,12}ᵀ + P_{k,22} F_k) M_{k−1}, with M_{−1} := Wf.
    for k in 0..n_steps {
        let cov = if k == 0 { p.wf.clone() } else { predicted_state_cov(&s.0[k - 1], p) };
        let p12t = mult[k].as_matrix().view((n, 0), (m, n)).into_owned();
        let p22 = mult[k].as_matrix().view((n, n), (m, m)).into_owned();
        let grad = (p12t + p22 * &gains[k]) * cov.as_matrix();
        let sym_form = crate::matrix::max_abs(&grad);
        report.stationarity_residual = report.stationarity_residual.max(sym_form);
    }

    let primal = cost_primal(s, p)?;
    let dual = cost_dual(mult, gains, p)?;
    report.duality_gap = (primal - dual).abs();
    Ok(report)
}

/// Convenience wrapper: certificates straight into [`verify_kkt`].
pub fn verify_certificate(p: &LqgProblem, gains: &GainSchedule, cert: &DualCertificate) -> Result<KktReport> {
    verify_kkt(p, &cert.s, gains, &cert.p, &cert.p_bar)
}
