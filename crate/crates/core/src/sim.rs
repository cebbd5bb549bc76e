//! Seeded Monte Carlo simulation of the closed loop `x⁺ = (A + B F_k) x + w`.
//!
//! Every replicate owns an independent ChaCha8 stream selected by
//! `(seed, replicate)`; within it, the word position is a pure function of
//! `(step, component)`. Replicates can therefore run in any order, on any
//! number of threads, and still reproduce bit-identical samples.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::model::{ensure_valid, GainSchedule, LqgProblem};

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub replicates: usize,
    pub seed: u64,
    pub record_trajectories: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { replicates: 3000, seed: 0, record_trajectories: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostStats {
    pub mean: f64,
    /// Sample standard deviation over `√replicates`.
    pub stderr: f64,
    pub samples: Vec<f64>,
}

impl CostStats {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let r = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / r;
        let var = if samples.len() > 1 {
            samples.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (r - 1.0)
        } else {
            0.0
        };
        CostStats { mean, stderr: (var / r).sqrt(), samples }
    }
}

/// One replicate: `states[k] = x(k)` for `k = 0..=N`, `inputs[k] = u(k)` for
/// `k = 0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
}

/// Standard normals for one replicate, addressed by `(step, component)`.
/// Step 0 is the initial state; step `k + 1` is the noise `w(k)`.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    dim: usize,
}

impl GaussianStream {
    pub fn new(seed: u64, replicate: u64, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replicate);
        GaussianStream { rng, dim }
    }

    /// `dim` independent N(0, 1) draws for `step`.
    pub fn normals(&mut self, step: u64) -> DVector<f64> {
        // Each component consumes two u64 words (four 32-bit words).
        let pairs = self.dim.div_ceil(2) as u128;
        self.rng.set_word_pos(step as u128 * pairs * 4);
        let mut out = DVector::zeros(self.dim);
        for c in (0..self.dim).step_by(2) {
            let (z0, z1) = box_muller(self.rng.next_u64(), self.rng.next_u64());
            out[c] = z0;
            if c + 1 < self.dim {
                out[c + 1] = z1;
            }
        }
        out
    }
}

/// Box–Muller on two 53-bit uniforms in `(0, 1]`.
fn box_muller(a: u64, b: u64) -> (f64, f64) {
    let to_unit = |r: u64| ((r >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let (u1, u2) = (to_unit(a), to_unit(b));
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = std::f64::consts::TAU * u2;
    (radius * angle.cos(), radius * angle.sin())
}

fn cholesky_factor(m: &SymMatrix, name: &str) -> Result<DMatrix<f64>> {
    // A PSD but singular covariance is legitimate; a tiny diagonal shift keeps
    // the factorization defined without visibly changing the samples.
    let shift = f64::EPSILON * m.max_abs().max(1.0);
    let shifted = m.as_matrix() + DMatrix::identity(m.dim(), m.dim()) * shift;
    nalgebra::Cholesky::new(shifted)
        .map(|c| c.l())
        .ok_or_else(|| Error::Input(format!("{name} is not positive semidefinite; cannot sample from it")))
}

/// Runs `cfg.replicates` closed-loop rollouts. Costs are
/// `Σ_{k<N} (xᵀQx + uᵀRu) + x(N)ᵀ Qf x(N)`.
pub fn simulate(p: &LqgProblem, gains: &GainSchedule, cfg: &SimConfig) -> Result<(CostStats, Option<Vec<Trajectory>>)> {
    ensure_valid(p)?;
    gains.check(p)?;
    if cfg.replicates == 0 {
        return Err(Error::Input("replicates must be at least 1".into()));
    }
    let lf = cholesky_factor(&p.wf, "Wf")?;
    let lw = cholesky_factor(&p.w, "W")?;
    let closed: Vec<DMatrix<f64>> = gains.0.iter().map(|f| &p.a + &p.b * f).collect();

    let run = |rep: usize| -> (f64, Option<Trajectory>) {
        let mut stream = GaussianStream::new(cfg.seed, rep as u64, p.n());
        let mut x = &lf * stream.normals(0);
        let mut cost = 0.0;
        let mut traj = cfg.record_trajectories.then(|| Trajectory { states: vec![], inputs: vec![] });
        for k in 0..p.horizon {
            let u = &gains[k] * &x;
            cost += x.dot(&(p.q.as_matrix() * &x)) + u.dot(&(p.r.as_matrix() * &u));
            let next = &closed[k] * &x + &lw * stream.normals(k as u64 + 1);
            if let Some(t) = traj.as_mut() {
                t.states.push(x.clone());
                t.inputs.push(u);
            }
            x = next;
        }
        cost += x.dot(&(p.qf.as_matrix() * &x));
        if let Some(t) = traj.as_mut() {
            t.states.push(x);
        }
        (cost, traj)
    };

    // Collected in replicate order, whatever the scheduling.
    let results: Vec<(f64, Option<Trajectory>)> = (0..cfg.replicates).into_par_iter().map(run).collect();
    let mut samples = Vec::with_capacity(results.len());
    let mut trajectories = cfg.record_trajectories.then(Vec::new);
    for (cost, traj) in results {
        samples.push(cost);
        if let (Some(all), Some(t)) = (trajectories.as_mut(), traj) {
            all.push(t);
        }
    }
    Ok((CostStats::from_samples(samples), trajectories))
}

/// Output locations for [`export_datasets`]; `None` skips a file.
#[derive(Clone, Debug, Default)]
pub struct DatasetPaths<'a> {
    pub trajectories: Option<&'a Path>,
    pub histogram: Option<&'a Path>,
}

/// Writes the trajectory CSV (`k,replicate,x1..xn,u1..um`, inputs blank at
/// `k = N`) and the histogram CSV (`replicate,cost`). Each file is written to
/// a temporary sibling and renamed into place.
pub fn export_datasets(trajectories: Option<&[Trajectory]>, stats: &CostStats, paths: &DatasetPaths) -> Result<()> {
    if let Some(path) = paths.histogram {
        write_atomic(path, |out| {
            writeln!(out, "replicate,cost")?;
            for (r, c) in stats.samples.iter().enumerate() {
                writeln!(out, "{r},{c:.16e}")?;
            }
            Ok(())
        })?;
    }
    if let (Some(path), Some(trajs)) = (paths.trajectories, trajectories) {
        let (n, m) = match trajs.first() {
            Some(t) => (t.states[0].len(), t.inputs.first().map_or(0, |u| u.len())),
            None => (0, 0),
        };
        write_atomic(path, |out| {
            let mut header = vec!["k".to_string(), "replicate".to_string()];
            header.extend((1..=n).map(|i| format!("x{i}")));
            header.extend((1..=m).map(|i| format!("u{i}")));
            writeln!(out, "{}", header.join(","))?;
            for (r, t) in trajs.iter().enumerate() {
                for (k, x) in t.states.iter().enumerate() {
                    let mut row = vec![k.to_string(), r.to_string()];
                    row.extend(x.iter().map(|v| format!("{v:.16e}")));
                    match t.inputs.get(k) {
                        Some(u) => row.extend(u.iter().map(|v| format!("{v:.16e}"))),
                        None => row.extend(std::iter::repeat_n(String::new(), m)),
                    }
                    writeln!(out, "{}", row.join(","))?;
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

pub(crate) fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut out = std::io::BufWriter::new(tmp.as_file_mut());
        body(&mut out)?;
        out.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
