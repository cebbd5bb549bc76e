//! JSON interchange formats.
//!
//! Problem file (matrices row-major, integers must be integral):
//!
//! ```json
//! { "n": 1, "m": 1, "N": 1,
//!   "A": [[1]], "B": [[1]], "Q": [[1]], "R": [[1]], "Qf": [[1]],
//!   "W": [[1]], "Wf": [[1]],
//!   "partition": { "n_sizes": [1], "m_sizes": [1] } }
//! ```
//!
//! `partition` is optional. Result files carry `method`, `objective_value`,
//! `gains` (`N × m × n`, present iff the method produces gains),
//! `residuals`, `solver_stats` and `wall_time_seconds`, plus optional fields
//! that let later commands (`verify-kkt`, `evaluate`, `simulate`) consume them.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{Design, SolverStats};
use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::model::{CovarianceTrajectory, GainSchedule, LqgProblem, Partition};

type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionFile {
    pub n_sizes: Vec<f64>,
    pub m_sizes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: f64,
    pub m: f64,
    #[serde(rename = "N")]
    pub horizon: f64,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    #[serde(rename = "Qf")]
    pub qf: Rows,
    #[serde(rename = "W")]
    pub w: Rows,
    #[serde(rename = "Wf")]
    pub wf: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionFile>,
}

fn integral(v: f64, what: &str) -> Result<usize> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Input(format!("{what} must be a non-negative integer, got {v}")))
    }
}

fn matrix(rows: &Rows, r: usize, c: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Input(format!("{name} must be {r}x{c}")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Symmetric input: rejected unless symmetric to a relative 1e-12.
fn sym(rows: &Rows, d: usize, name: &str) -> Result<SymMatrix> {
    let m = matrix(rows, d, d, name)?;
    let asym = crate::matrix::max_abs(&(&m - m.transpose()));
    if asym > 1e-12 * crate::matrix::max_abs(&m).max(1.0) {
        return Err(Error::Input(format!("{name} is not symmetric")));
    }
    SymMatrix::new(m)
}

pub fn rows_of(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl ProblemFile {
    /// Parses and validates; the partition is `None` when absent.
    pub fn into_problem(self) -> Result<(LqgProblem, Option<Partition>)> {
        let n = integral(self.n, "n")?;
        let m = integral(self.m, "m")?;
        let horizon = integral(self.horizon, "N")?;
        let p = LqgProblem::new(
            matrix(&self.a, n, n, "A")?,
            matrix(&self.b, n, m, "B")?,
            sym(&self.q, n, "Q")?,
            sym(&self.r, m, "R")?,
            sym(&self.qf, n, "Qf")?,
            sym(&self.w, n, "W")?,
            sym(&self.wf, n, "Wf")?,
            horizon,
        )?;
        crate::model::ensure_valid(&p)?;
        let part = match self.partition {
            Some(pf) => {
                let ns = pf.n_sizes.iter().map(|&v| integral(v, "n_sizes entry")).collect::<Result<Vec<_>>>()?;
                let ms = pf.m_sizes.iter().map(|&v| integral(v, "m_sizes entry")).collect::<Result<Vec<_>>>()?;
                let part = Partition::new(ns, ms)?;
                part.check(&p)?;
                Some(part)
            }
            None => None,
        };
        Ok((p, part))
    }

    pub fn from_problem(p: &LqgProblem, part: Option<&Partition>) -> Self {
        ProblemFile {
            n: p.n() as f64,
            m: p.m() as f64,
            horizon: p.horizon as f64,
            a: rows_of(&p.a),
            b: rows_of(&p.b),
            q: rows_of(&p.q),
            r: rows_of(&p.r),
            qf: rows_of(&p.qf),
            w: rows_of(&p.w),
            wf: rows_of(&p.wf),
            partition: part.map(|pt| PartitionFile {
                n_sizes: pt.n_sizes.iter().map(|&v| v as f64).collect(),
                m_sizes: pt.m_sizes.iter().map(|&v| v as f64).collect(),
            }),
        }
    }
}

pub fn read_problem(path: &Path) -> Result<(LqgProblem, Option<Partition>)> {
    let text = std::fs::read_to_string(path)?;
    let file: ProblemFile = serde_json::from_str(&text)?;
    file.into_problem()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub mean: f64,
    pub stderr: f64,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub method: String,
    pub objective_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<Rows>>,
    #[serde(default)]
    pub residuals: BTreeMap<String, f64>,
    #[serde(default)]
    pub solver_stats: Option<SolverStats>,
    pub wall_time_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluated_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariances: Option<Vec<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<Vec<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multipliers_bar: Option<Vec<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimSummary>,
}

fn sym_rows(v: &[SymMatrix]) -> Vec<Rows> {
    v.iter().map(|s| rows_of(s.as_matrix())).collect()
}

fn sym_list(v: &[Rows], d: usize, name: &str) -> Result<Vec<SymMatrix>> {
    v.iter().enumerate().map(|(k, r)| sym(r, d, &format!("{name}[{k}]"))).collect()
}

impl ResultFile {
    pub fn new(method: &str, objective_value: f64) -> Self {
        ResultFile {
            method: method.to_string(),
            objective_value,
            gains: None,
            residuals: BTreeMap::new(),
            solver_stats: None,
            wall_time_seconds: 0.0,
            evaluated_cost: None,
            covariances: None,
            multipliers: None,
            multipliers_bar: None,
            simulation: None,
        }
    }

    pub fn from_design(d: &Design) -> Self {
        let mut out = ResultFile::new(d.method.name(), d.objective_value);
        out.gains = d.gains.as_ref().map(|g| g.0.iter().map(rows_of).collect());
        out.evaluated_cost = d.evaluated_cost;
        out.covariances = d.covariances.as_ref().map(|c| sym_rows(&c.0));
        out.multipliers = d.multipliers.as_deref().map(sym_rows);
        out.multipliers_bar = d.multipliers_bar.as_deref().map(sym_rows);
        if let Some(s) = &d.solver {
            out.residuals.insert("primal".into(), s.primal_residual);
            out.residuals.insert("dual".into(), s.dual_residual);
            out.residuals.insert("max_violation".into(), s.max_violation);
        }
        out.solver_stats = d.solver.clone();
        out
    }

    pub fn gain_schedule(&self, p: &LqgProblem) -> Result<GainSchedule> {
        let g = self.gains.as_ref().ok_or_else(|| Error::Input(format!("{} result has no gains", self.method)))?;
        let gains =
            g.iter().enumerate().map(|(k, f)| matrix(f, p.m(), p.n(), &format!("gains[{k}]"))).collect::<Result<Vec<_>>>()?;
        let gains = GainSchedule(gains);
        gains.check(p)?;
        Ok(gains)
    }

    pub fn covariance_trajectory(&self, p: &LqgProblem) -> Result<CovarianceTrajectory> {
        let c = self.covariances.as_ref().ok_or_else(|| Error::Input(format!("{} result has no covariances", self.method)))?;
        sym_list(c, p.n() + p.m(), "covariances").map(CovarianceTrajectory)
    }

    /// `(P_k, P̄_k)`; a missing `multipliers_bar` reads as all zeros.
    pub fn multiplier_pair(&self, p: &LqgProblem) -> Result<(Vec<SymMatrix>, Vec<SymMatrix>)> {
        let d = p.n() + p.m();
        let m = self.multipliers.as_ref().ok_or_else(|| Error::Input(format!("{} result has no multipliers", self.method)))?;
        let mult = sym_list(m, d, "multipliers")?;
        let bar = match &self.multipliers_bar {
            Some(b) => sym_list(b, d, "multipliers_bar")?,
            None => vec![SymMatrix::zeros(d); mult.len()],
        };
        Ok((mult, bar))
    }
}

pub fn read_result(path: &Path) -> Result<ResultFile> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"{"n":1,"m":1,"N":1,"A":[[1]],"B":[[1]],"Q":[[1]],"R":[[1]],"Qf":[[1]],"W":[[1]],"Wf":[[1]]}"#;

    #[test]
    fn parses_scalar_problem() {
        let f: ProblemFile = serde_json::from_str(SCALAR).unwrap();
        let (p, part) = f.clone().into_problem().unwrap();
        assert_eq!((p.n(), p.m(), p.horizon), (1, 1, 1));
        assert!(part.is_none());
        assert_eq!(ProblemFile::from_problem(&p, None), f);
    }

    #[test]
    fn rejects_non_integral_and_misshapen() {
        let bad = SCALAR.replace("\"N\":1", "\"N\":1.5");
        let f: ProblemFile = serde_json::from_str(&bad).unwrap();
        assert!(matches!(f.into_problem(), Err(Error::Input(_))));

        let bad = SCALAR.replace("\"B\":[[1]]", "\"B\":[[1, 2]]");
        let f: ProblemFile = serde_json::from_str(&bad).unwrap();
        assert!(f.into_problem().is_err());

        let bad = SCALAR.replace("\"R\":[[1]]", "\"R\":[[0]]");
        let f: ProblemFile = serde_json::from_str(&bad).unwrap();
        assert!(f.into_problem().is_err());

        let bad = SCALAR.replace("\"N\":1,", "\"N\":1,\"extra\":0,");
        assert!(serde_json::from_str::<ProblemFile>(&bad).is_err());
    }

    #[test]
    fn bundled_example_matches_builtin() {
        let text = include_str!("../data/example1.json");
        let f: ProblemFile = serde_json::from_str(text).unwrap();
        let (p, part) = f.into_problem().unwrap();
        let (q, qpart) = LqgProblem::example1();
        assert_eq!(p, q);
        assert_eq!(part.unwrap(), qpart);
    }
}
