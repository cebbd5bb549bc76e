use super::{AffineSym, LmiBuilder, LmiKind, LmiProblem, MatVar, Sense, SymVar};
use crate::error::Result;
use crate::matrix::SymMatrix;
use crate::model::{ensure_valid, LqgProblem, Partition};

/// Primal covariance SDP in LMI form. Unknowns per stage `k`: the joint
/// covariance bound `S_k`, the slack `G_k` (n × n) and `H_k = G_k F_kᵀ`
/// (n × m). Stage `k` contributes
///
/// ```text
/// [ S_k        [G_k H_k]ᵀ                      ]
/// [ [G_k H_k]  G_k + G_kᵀ − [A B] S_{k−1} [A B]ᵀ − W ]  ⪰ 0
/// ```
///
/// with `Wf` in place of `[A B] S_{−1} [A B]ᵀ + W` at `k = 0`.
pub fn build_primal_sdp(p: &LqgProblem) -> Result<LmiProblem> {
    ensure_valid(p)?;
    let (n, m) = (p.n(), p.m());
    let mut b = LmiBuilder::new();
    let stages = allocate_primal(&mut b, p, |_, _| true, |_, _| true);
    finish_primal(b, p, stages, LmiKind::Primal { n, m, horizon: p.horizon })
}

/// Structured relaxation: as [`build_primal_sdp`] with `G_k` restricted to
/// `diag(G_{k,1}, .., G_{k,M})` and the `H_k` slot (here `L_k`) to
/// `diag(L_{k,1}, .., L_{k,M})` conforming to the partition. Entries outside
/// the diagonal blocks are not variables at all.
pub fn build_decentralized_sdp(p: &LqgProblem, part: &Partition) -> Result<LmiProblem> {
    ensure_valid(p)?;
    part.check(p)?;
    let (n, m) = (p.n(), p.m());
    let state_block = block_index(&part.n_sizes);
    let input_block = block_index(&part.m_sizes);
    let mut b = LmiBuilder::new();
    let stages = allocate_primal(
        &mut b,
        p,
        |r, c| state_block[r] == state_block[c],
        |r, c| state_block[r] == input_block[c],
    );
    let kind = LmiKind::Decentralized { n, m, horizon: p.horizon, partition: part.clone() };
    finish_primal(b, p, stages, kind)
}

fn block_index(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(i, &s)| std::iter::repeat_n(i, s)).collect()
}

struct Stage {
    s: SymVar,
    g: MatVar,
    h: MatVar,
}

fn allocate_primal(
    b: &mut LmiBuilder,
    p: &LqgProblem,
    keep_g: impl Fn(usize, usize) -> bool + Copy,
    keep_h: impl Fn(usize, usize) -> bool + Copy,
) -> Vec<Stage> {
    let (n, m) = (p.n(), p.m());
    (0..p.horizon)
        .map(|k| Stage {
            s: b.sym_var(format!("S{k}"), n + m),
            g: b.mat_var(format!("G{k}"), n, n, keep_g),
            h: b.mat_var(format!("H{k}"), n, m, keep_h),
        })
        .collect()
}

fn finish_primal(mut b: LmiBuilder, p: &LqgProblem, stages: Vec<Stage>, kind: LmiKind) -> Result<LmiProblem> {
    let (n, m) = (p.n(), p.m());
    let nm = n + m;
    let ab = p.ab();
    for (k, st) in stages.iter().enumerate() {
        let mut e = AffineSym::new(2 * n + m);
        e.add_sym(0, st.s, 1.0);
        e.add_mat_offdiag(nm, 0, &st.g, 1.0);
        e.add_mat_offdiag(nm, n, &st.h, 1.0);
        e.add_mat_sym_part(nm, &st.g, 1.0);
        if k == 0 {
            e.add_constant(nm, &(-p.wf.as_matrix()));
        } else {
            e.add_sym_congruence(nm, stages[k - 1].s, &ab, -1.0);
            e.add_constant(nm, &(-p.w.as_matrix()));
        }
        b.push(format!("stage{k}"), e);
    }

    // J_p = Tr(Qf [A B] S_{N−1} [A B]ᵀ) + Tr(Qf W) + Σ Tr(blkdiag(Q, R) S_k).
    let stage_w = p.stage_weight();
    for (k, st) in stages.iter().enumerate() {
        if k + 1 == p.horizon {
            b.objective_sym(st.s, &stage_w.add(&p.qf.congruence(&ab.transpose())));
        } else {
            b.objective_sym(st.s, &stage_w);
        }
    }
    b.add_offset(p.qf.dot(&p.w));
    let lmi = b.finish(Sense::Minimize, kind);
    lmi.check()?;
    Ok(lmi)
}

/// Dual SDP with the Schur complement of each `P_k` hypographed by `Y_k`:
///
/// ```text
/// maximize   Tr(Wf Y_0) + Σ_{k=1}^{N−1} Tr(W Y_k) + Tr(W Qf)
/// subject to P_k − blkdiag(Y_k, 0) ⪰ 0                          k = 0..N−1
///            [A B]ᵀ Y_k [A B] + blkdiag(Q, R) − P_{k−1} ⪰ 0     k = 1..N−1
///            [A B]ᵀ Qf [A B] + blkdiag(Q, R) − P_{N−1} ⪰ 0
///            P_k ⪰ 0
/// ```
pub fn build_dual_sdp(p: &LqgProblem) -> Result<LmiProblem> {
    dual_sdp(p, 0.0)
}

/// [`build_dual_sdp`] with `weight · Σ Tr(P_k)` added to the objective.
///
/// The optimal `P_k` of the plain dual is not unique: it may shrink in
/// directions orthogonal to the range of `[I; F_k]` without changing any
/// Schur complement. Every feasible point has `Y_k ⪯ X_k` and therefore
/// `P_k ⪯ [A B]ᵀ X_{k+1} [A B] + blkdiag(Q, R)`, with equality attained at the
/// Riccati point, so for any `weight > 0` the perturbed problem has the same
/// optimizer in `Y` and selects the Loewner-greatest optimal `P_k`. The
/// objective then differs from `J_d` by `weight · Σ Tr(P_k)`; use
/// [`dual_objective`] to evaluate `J_d` alone.
pub fn build_dual_sdp_tiebreak(p: &LqgProblem, weight: f64) -> Result<LmiProblem> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(crate::error::Error::Input(format!("tie-break weight must be finite and non-negative, got {weight}")));
    }
    dual_sdp(p, weight)
}

/// `J_d` at a point of a problem built by [`build_dual_sdp`] or
/// [`build_dual_sdp_tiebreak`].
pub fn dual_objective(p: &LqgProblem, lmi: &LmiProblem, x: &[f64]) -> Result<f64> {
    let mut value = p.w.dot(&p.qf);
    for k in 0..p.horizon {
        let weight = if k == 0 { &p.wf } else { &p.w };
        value += weight.dot(&lmi.sym_value(x, &format!("Y{k}"))?);
    }
    Ok(value)
}

fn dual_sdp(p: &LqgProblem, tiebreak: f64) -> Result<LmiProblem> {
    ensure_valid(p)?;
    let (n, m) = (p.n(), p.m());
    let nm = n + m;
    let ab = p.ab();
    let abt = ab.transpose();
    let stage_w = p.stage_weight();

    let mut b = LmiBuilder::new();
    let vars: Vec<(SymVar, SymVar)> =
        (0..p.horizon).map(|k| (b.sym_var(format!("P{k}"), nm), b.sym_var(format!("Y{k}"), n))).collect();

    for (k, &(pk, yk)) in vars.iter().enumerate() {
        let mut coupling = AffineSym::new(nm);
        coupling.add_sym(0, pk, 1.0);
        coupling.add_sym(0, yk, -1.0);
        b.push(format!("coupling{k}"), coupling);

        let mut psd = AffineSym::new(nm);
        psd.add_sym(0, pk, 1.0);
        b.push(format!("psd{k}"), psd);

        let mut rec = AffineSym::new(nm);
        rec.add_constant(0, stage_w.as_matrix());
        rec.add_sym(0, pk, -1.0);
        if k + 1 < p.horizon {
            rec.add_sym_congruence(0, vars[k + 1].1, &abt, 1.0);
        } else {
            rec.add_constant(0, p.qf.congruence(&abt).as_matrix());
        }
        b.push(format!("recursion{k}"), rec);

        let weight = if k == 0 { &p.wf } else { &p.w };
        b.objective_sym(yk, weight);
        if tiebreak > 0.0 {
            b.objective_sym(pk, &SymMatrix::scaled_identity(nm, tiebreak));
        }
    }
    b.add_offset(p.w.dot(&p.qf));
    let lmi = b.finish(Sense::Maximize, LmiKind::Dual { n, m, horizon: p.horizon });
    lmi.check()?;
    Ok(lmi)
}
