//! Command-line front end.
//!
//! ```text
//! lqgsdp riccati        --input problem.json [--output result.json]
//! lqgsdp solve-primal   --input problem.json [--tol T] [--max-iters K] [--trace trace.csv] [--export-sdpa lmi.txt]
//! lqgsdp solve-dual     --input problem.json [...same solver flags]
//! lqgsdp decentralized  --input problem.json [...same solver flags]
//! lqgsdp verify-kkt     --input problem.json --primal primal.json --dual dual.json [--tol T]
//! lqgsdp evaluate       --input problem.json --gains result.json
//! lqgsdp simulate       --input problem.json --gains result.json [--seed S] [--replicates R]
//!                       [--histogram hist.csv] [--trajectories traj.csv]
//! ```
//!
//! Exit codes: 0 success, 1 invalid input or failed check, 2 solver hit
//! `max_iters`, 3 solver suspects infeasibility.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::design::{design_decentralized, design_dual, design_primal, design_riccati, Design};
use crate::error::{Error, Result};
use crate::files::{read_problem, read_result, ResultFile, SimSummary};
use crate::model::{evaluate_gains, LqgProblem, Partition};
use crate::riccati::verify_kkt;
use crate::sdp::{build_decentralized_sdp, build_dual_sdp, build_primal_sdp, write_listing, SolveStatus};
use crate::sim::{export_datasets, simulate, DatasetPaths, SimConfig};
use crate::solver::SolverConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_MAX_ITERS: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Default pass threshold for `verify-kkt` when `--tol` is not given.
pub const KKT_DEFAULT_TOL: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "lqgsdp", version, about = "Finite-horizon LQG design via Riccati, covariance SDPs and their duals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Problem description (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Result file; printed to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Relative solver tolerance (the absolute one is a tenth of it); for
    /// `verify-kkt`, the pass threshold on every residual.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3000)]
    replicates: usize,
    /// Iteration trace CSV (iter,primal_res,dual_res,objective).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record a trace row every this many iterations.
    #[arg(long, default_value_t = 10)]
    trace_every: usize,
}

#[derive(Args, Debug, Clone)]
struct SdpArgs {
    #[command(flatten)]
    common: Common,
    /// Write the LMI problem as a plain-text sparse listing.
    #[arg(long)]
    export_sdpa: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Backward Riccati recursion, KKT certificates and exact cost.
    Riccati(Common),
    /// Primal covariance SDP.
    SolvePrimal(SdpArgs),
    /// Dual SDP.
    SolveDual(SdpArgs),
    /// Block-diagonal relaxation using the problem's partition.
    Decentralized(SdpArgs),
    /// KKT residuals of a primal result (gains, covariances) against a dual
    /// result (multipliers).
    VerifyKkt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        primal: PathBuf,
        #[arg(long)]
        dual: PathBuf,
    },
    /// Exact cost of the gains in a result file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gains: PathBuf,
    },
    /// Monte Carlo rollouts of the gains in a result file.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gains: PathBuf,
        /// Cost histogram CSV (replicate,cost).
        #[arg(long)]
        histogram: Option<PathBuf>,
        /// State/input trajectories CSV (k,replicate,x1..,u1..).
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
}

/// Parses `argv` (program name first) and runs one command.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn solver_config(c: &Common) -> Result<SolverConfig> {
    let mut cfg = SolverConfig::default();
    if let Some(t) = c.tol {
        cfg.tol_rel = t;
        cfg.tol_abs = t / 10.0;
    }
    if let Some(k) = c.max_iters {
        cfg.max_iters = k;
    }
    if c.trace.is_some() {
        cfg.trace_every = c.trace_every.max(1);
    }
    cfg.check()?;
    Ok(cfg)
}

fn emit(result: &ResultFile, output: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(result)?;
    match output {
        Some(path) => crate::sim::write_atomic(path, |out| {
            writeln!(out, "{text}")?;
            Ok(())
        }),
        None => {
            use std::io::Write;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn status_code(status: Option<SolveStatus>) -> i32 {
    match status {
        Some(SolveStatus::MaxIters) => EXIT_MAX_ITERS,
        Some(SolveStatus::InfeasibleSuspected) => EXIT_INFEASIBLE,
        _ => EXIT_OK,
    }
}

fn partition_of(part: Option<Partition>) -> Result<Partition> {
    part.ok_or_else(|| Error::Input("decentralized design needs a \"partition\" in the problem file".into()))
}

fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Riccati(c) => {
            let (p, _) = read_problem(&c.input)?;
            let t = Instant::now();
            let d = design_riccati(&p)?;
            let wall = t.elapsed().as_secs_f64();
            let mut out = ResultFile::from_design(&d);
            let report = verify_kkt(
                &p,
                d.covariances.as_ref().expect("riccati covariances"),
                d.gains.as_ref().expect("riccati gains"),
                d.multipliers.as_deref().expect("riccati multipliers"),
                d.multipliers_bar.as_deref().expect("riccati multipliers"),
            )?;
            out.residuals = kkt_map(&report);
            out.wall_time_seconds = wall;
            emit(&out, c.output.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::SolvePrimal(a) => run_sdp(a, |p, _, cfg| design_primal(p, cfg), |p, _| build_primal_sdp(p)),
        Command::SolveDual(a) => run_sdp(a, |p, _, cfg| design_dual(p, cfg), |p, _| build_dual_sdp(p)),
        Command::Decentralized(a) => run_sdp(
            a,
            |p, part, cfg| design_decentralized(p, &partition_of(part)?, cfg),
            |p, part| build_decentralized_sdp(p, &partition_of(part)?),
        ),
        Command::VerifyKkt { common, primal, dual } => {
            let (p, _) = read_problem(&common.input)?;
            let primal = read_result(&primal)?;
            let dual = read_result(&dual)?;
            let t = Instant::now();
            let gains = primal.gain_schedule(&p)?;
            let s = primal.covariance_trajectory(&p)?;
            let (mult, bar) = dual.multiplier_pair(&p)?;
            let report = verify_kkt(&p, &s, &gains, &mult, &bar)?;
            let mut out = ResultFile::new("verify-kkt", crate::model::cost_primal(&s, &p)?);
            out.residuals = kkt_map(&report);
            out.wall_time_seconds = t.elapsed().as_secs_f64();
            emit(&out, common.output.as_deref())?;
            let tol = common.tol.unwrap_or(KKT_DEFAULT_TOL);
            if report.max() <= tol {
                Ok(EXIT_OK)
            } else {
                eprintln!("KKT residual {:e} exceeds {tol:e}", report.max());
                Ok(EXIT_INPUT)
            }
        }
        Command::Evaluate { common, gains } => {
            let (p, _) = read_problem(&common.input)?;
            let g = read_result(&gains)?.gain_schedule(&p)?;
            let t = Instant::now();
            let (cost, _) = evaluate_gains(&p, &g)?;
            let mut out = ResultFile::new("evaluate", cost);
            out.gains = Some(g.0.iter().map(crate::files::rows_of).collect());
            out.evaluated_cost = Some(cost);
            out.wall_time_seconds = t.elapsed().as_secs_f64();
            emit(&out, common.output.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Simulate { common, gains, histogram, trajectories } => {
            let (p, _) = read_problem(&common.input)?;
            let g = read_result(&gains)?.gain_schedule(&p)?;
            let cfg =
                SimConfig { replicates: common.replicates, seed: common.seed, record_trajectories: trajectories.is_some() };
            let t = Instant::now();
            let (stats, trajs) = simulate(&p, &g, &cfg)?;
            let paths = DatasetPaths { trajectories: trajectories.as_deref(), histogram: histogram.as_deref() };
            export_datasets(trajs.as_deref(), &stats, &paths)?;
            let (exact, _) = evaluate_gains(&p, &g)?;
            let mut out = ResultFile::new("simulate", stats.mean);
            out.gains = Some(g.0.iter().map(crate::files::rows_of).collect());
            out.evaluated_cost = Some(exact);
            out.simulation =
                Some(SimSummary { mean: stats.mean, stderr: stats.stderr, replicates: cfg.replicates, seed: cfg.seed });
            out.wall_time_seconds = t.elapsed().as_secs_f64();
            emit(&out, common.output.as_deref())?;
            Ok(EXIT_OK)
        }
    }
}

fn kkt_map(r: &crate::riccati::KktReport) -> std::collections::BTreeMap<String, f64> {
    [
        ("primal_residual", r.primal_residual),
        ("dual_residual", r.dual_residual),
        ("slackness_residual", r.slackness_residual),
        ("stationarity_residual", r.stationarity_residual),
        ("duality_gap", r.duality_gap),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn run_sdp(
    a: SdpArgs,
    design: impl Fn(&LqgProblem, Option<Partition>, &SolverConfig) -> Result<Design>,
    build: impl Fn(&LqgProblem, Option<Partition>) -> Result<crate::sdp::LmiProblem>,
) -> Result<i32> {
    let c = &a.common;
    let (p, part) = read_problem(&c.input)?;
    let cfg = solver_config(c)?;
    if let Some(path) = &a.export_sdpa {
        let lmi = build(&p, part.clone())?;
        crate::sim::write_atomic(path, |out| write_listing(&lmi, out))?;
    }
    let t = Instant::now();
    let d = design(&p, part, &cfg)?;
    let mut out = ResultFile::from_design(&d);
    out.wall_time_seconds = t.elapsed().as_secs_f64();
    if let Some(path) = &c.trace {
        d.trace.write_csv(path)?;
    }
    emit(&out, c.output.as_deref())?;
    let status = d.solver.as_ref().map(|s| s.status);
    if status != Some(SolveStatus::Optimal) {
        eprintln!("solver stopped with status {status:?}");
    }
    Ok(status_code(status))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_bad_flags() {
        assert_eq!(dispatch(["lqgsdp", "--help"]), EXIT_OK);
        assert_eq!(dispatch(["lqgsdp", "riccati"]), EXIT_INPUT);
        assert_eq!(dispatch(["lqgsdp", "frobnicate"]), EXIT_INPUT);
        assert_eq!(dispatch(["lqgsdp", "riccati", "--input", "/nonexistent.json"]), EXIT_INPUT);
    }

    #[test]
    fn tol_flag_maps_to_both_tolerances() {
        let c = Common {
            input: "x".into(),
            output: None,
            tol: Some(1e-5),
            max_iters: Some(7),
            seed: 0,
            replicates: 1,
            trace: None,
            trace_every: 10,
        };
        let cfg = solver_config(&c).unwrap();
        assert_eq!((cfg.tol_rel, cfg.max_iters, cfg.trace_every), (1e-5, 7, 0));
        assert!((cfg.tol_abs - 1e-6).abs() < 1e-20);
        assert!(solver_config(&Common { tol: Some(-1.0), ..c }).is_err());
    }
}
