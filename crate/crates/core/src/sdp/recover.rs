use nalgebra::DMatrix;

use super::{LmiKind, LmiProblem, SdpSolution};
use crate::error::{Error, Result};
use crate::matrix::{solve_spd, SymMatrix};
use crate::model::{CovarianceTrajectory, GainSchedule};

/// Smallest eigenvalue of `P_{k,22}` accepted before inverting it.
pub const MIN_INPUT_BLOCK_EIG: f64 = 1e-8;
/// Reciprocal condition number below which `G_k` counts as singular.
const MIN_RCOND: f64 = 1e-12;

/// Extracts the feedback gains from a solved primal, decentralized or dual
/// problem:
///
/// - primal: `F_k = H_kᵀ G_k⁻ᵀ`
/// - decentralized: `F_{k,i} = L_{k,i}ᵀ G_{k,i}⁻ᵀ`, assembled block-diagonally
/// - dual: `F_k = −P_{k,22}⁻¹ P_{k,12}ᵀ`
pub fn recover_gains(lmi: &LmiProblem, sol: &SdpSolution) -> Result<GainSchedule> {
    let x = &sol.x;
    match &lmi.kind {
        LmiKind::Primal { horizon, .. } => (0..*horizon)
            .map(|k| {
                let g = lmi.mat_value(x, &format!("G{k}"))?;
                let h = lmi.mat_value(x, &format!("H{k}"))?;
                gain_from_slack(&g, &h).map_err(|reason| Error::Recovery { stage: k, block: None, reason })
            })
            .collect::<Result<Vec<_>>>()
            .map(GainSchedule),
        LmiKind::Decentralized { n, m, horizon, partition } => {
            let no = partition.n_offsets();
            let mo = partition.m_offsets();
            let mut gains = Vec::with_capacity(*horizon);
            for k in 0..*horizon {
                let g = lmi.mat_value(x, &format!("G{k}"))?;
                let l = lmi.mat_value(x, &format!("H{k}"))?;
                let mut f = DMatrix::zeros(*m, *n);
                for i in 0..partition.blocks() {
                    let (ni, mi) = (partition.n_sizes[i], partition.m_sizes[i]);
                    let gi = g.view((no[i], no[i]), (ni, ni)).into_owned();
                    let li = l.view((no[i], mo[i]), (ni, mi)).into_owned();
                    let fi = gain_from_slack(&gi, &li)
                        .map_err(|reason| Error::Recovery { stage: k, block: Some(i), reason })?;
                    f.view_mut((mo[i], no[i]), (mi, ni)).copy_from(&fi);
                }
                gains.push(f);
            }
            Ok(GainSchedule(gains))
        }
        LmiKind::Dual { n, m, horizon } => (0..*horizon)
            .map(|k| {
                let pk = lmi.sym_value(x, &format!("P{k}"))?;
                gain_from_multiplier(&pk, *n, *m).map_err(|reason| Error::Recovery { stage: k, block: None, reason })
            })
            .collect::<Result<Vec<_>>>()
            .map(GainSchedule),
        LmiKind::Generic => Err(Error::Input("generic LMI problems carry no gain layout".into())),
    }
}

/// `F = Hᵀ G⁻ᵀ`, i.e. the transpose of `G⁻¹ H`.
fn gain_from_slack(g: &DMatrix<f64>, h: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, String> {
    let sv = g.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smax > 0.0) || smin < MIN_RCOND * smax {
        return Err(format!("G is singular (singular values {smin:e}..{smax:e})"));
    }
    let z = g.clone().lu().solve(h).ok_or_else(|| "LU solve of G failed".to_string())?;
    Ok(z.transpose())
}

/// `F = −P₂₂⁻¹ P₁₂ᵀ` for `P = [[P₁₁, P₁₂], [P₁₂ᵀ, P₂₂]]` with `P₁₁` of size n.
pub(crate) fn gain_from_multiplier(pk: &SymMatrix, n: usize, m: usize) -> std::result::Result<DMatrix<f64>, String> {
    let p22 = pk.principal(n, m);
    let min = p22.min_eigenvalue().map_err(|e| e.to_string())?;
    if min < MIN_INPUT_BLOCK_EIG {
        return Err(format!("input block of P has min eigenvalue {min:e}"));
    }
    let p12t = pk.as_matrix().view((n, 0), (m, n)).into_owned();
    solve_spd(&p22, &p12t).map(|f| -f).map_err(|e| e.to_string())
}

/// `S_0 .. S_{N-1}` from a primal or decentralized solution.
pub fn primal_covariances(lmi: &LmiProblem, x: &[f64]) -> Result<CovarianceTrajectory> {
    let horizon = match &lmi.kind {
        LmiKind::Primal { horizon, .. } | LmiKind::Decentralized { horizon, .. } => *horizon,
        _ => return Err(Error::Input("not a primal covariance problem".into())),
    };
    (0..horizon)
        .map(|k| lmi.sym_value(x, &format!("S{k}")))
        .collect::<Result<Vec<_>>>()
        .map(CovarianceTrajectory)
}

/// `P_0 .. P_{N-1}` from a dual solution.
pub fn dual_multipliers(lmi: &LmiProblem, x: &[f64]) -> Result<Vec<SymMatrix>> {
    let LmiKind::Dual { horizon, .. } = lmi.kind else {
        return Err(Error::Input("not a dual problem".into()));
    };
    (0..horizon).map(|k| lmi.sym_value(x, &format!("P{k}"))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::svec;
    use crate::model::tests::scalar;
    use crate::sdp::{build_decentralized_sdp, build_dual_sdp, build_primal_sdp, SolveStatus};

    fn solution(x: Vec<f64>) -> SdpSolution {
        SdpSolution {
            x,
            block_slacks: vec![],
            block_duals: vec![],
            objective_value: 0.0,
            status: SolveStatus::Optimal,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations: 0,
        }
    }

    #[test]
    fn dual_recovery_scalar() {
        let lmi = build_dual_sdp(&scalar(1)).unwrap();
        let mut x = svec(&SymMatrix::from_row_slice(2, &[2.0, 1.0, 1.0, 2.0]).unwrap());
        x.push(1.5);
        let f = recover_gains(&lmi, &solution(x)).unwrap();
        assert!((f[0][(0, 0)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn dual_recovery_rejects_singular_input_block() {
        let lmi = build_dual_sdp(&scalar(1)).unwrap();
        let x = svec(&SymMatrix::from_row_slice(2, &[2.0, 0.0, 0.0, 0.0]).unwrap());
        let err = recover_gains(&lmi, &solution([x, vec![0.0]].concat())).unwrap_err();
        assert!(matches!(err, Error::Recovery { stage: 0, block: None, .. }));
    }

    #[test]
    fn primal_recovery_scalar() {
        let lmi = build_primal_sdp(&scalar(1)).unwrap();
        let (g, h) = (2.0, -1.0);
        let x = vec![1.0, 0.0, 0.0, g, h];
        let f = recover_gains(&lmi, &solution(x)).unwrap();
        assert!((f[0][(0, 0)] - h / g).abs() < 1e-15);

        let err = recover_gains(&lmi, &solution(vec![1.0, 0.0, 0.0, 0.0, h])).unwrap_err();
        assert!(matches!(err, Error::Recovery { stage: 0, .. }));
    }

    #[test]
    fn decentralized_recovery_is_block_diagonal() {
        let (p, part) = crate::model::LqgProblem::example1();
        let mut p = p;
        p.horizon = 1;
        let lmi = build_decentralized_sdp(&p, &part).unwrap();
        let mut x = vec![0.0; lmi.num_vars];
        // G0 = I (diagonal blocks), L0 = [1;2 | 3;4] in the 2x1 blocks.
        let g = lmi.group("G0").unwrap().clone();
        let crate::sdp::VarKind::General { entries, .. } = &g.kind else { panic!() };
        for d in 0..4 {
            x[entries[d * 4 + d].unwrap()] = 1.0;
        }
        let l = lmi.group("H0").unwrap().indices.clone();
        for (i, idx) in l.iter().enumerate() {
            x[*idx] = (i + 1) as f64;
        }
        let f = recover_gains(&lmi, &solution(x.clone())).unwrap();
        let expect = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 3.0, 4.0]);
        assert_eq!(f[0], expect);

        x[entries[2 * 4 + 2].unwrap()] = 0.0;
        x[entries[3 * 4 + 3].unwrap()] = 0.0;
        let err = recover_gains(&lmi, &solution(x)).unwrap_err();
        assert!(matches!(err, Error::Recovery { stage: 0, block: Some(1), .. }));
    }
}
