mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use lqgsdp::cli::{dispatch, EXIT_INPUT, EXIT_MAX_ITERS, EXIT_OK};
use lqgsdp::files::{read_result, ProblemFile, ResultFile};

fn write_problem(dir: &Path, p: &lqgsdp::LqgProblem, name: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(&ProblemFile::from_problem(p, None)).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> i32 {
    dispatch(std::iter::once("lqgsdp").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn methods_agree_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = common::rng(31);
    let input = write_problem(dir.path(), &common::random_problem(&mut rng, 2, 1, 3), "p.json");
    let mut values = vec![];
    for cmd in ["riccati", "solve-primal", "solve-dual"] {
        let out = dir.path().join(format!("{cmd}.json"));
        assert_eq!(run(&[cmd, "--input", s(&input), "--output", s(&out)]), EXIT_OK, "{cmd}");
        let r = read_result(&out).unwrap();
        assert!(r.gains.is_some());
        assert!(r.wall_time_seconds >= 0.0);
        values.push(r.objective_value);
    }
    for v in &values[1..] {
        assert!((v - values[0]).abs() <= 1e-4 * values[0].abs(), "{values:?}");
    }
}

#[test]
fn result_gains_round_trip_through_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = common::rng(32);
    let input = write_problem(dir.path(), &common::random_problem(&mut rng, 3, 2, 4), "p.json");
    let design = dir.path().join("design.json");
    let eval = dir.path().join("eval.json");
    assert_eq!(run(&["riccati", "--input", s(&input), "--output", s(&design)]), EXIT_OK);
    assert_eq!(run(&["evaluate", "--input", s(&input), "--gains", s(&design), "--output", s(&eval)]), EXIT_OK);
    let (d, e) = (read_result(&design).unwrap(), read_result(&eval).unwrap());
    assert!((d.objective_value - e.objective_value).abs() <= 1e-9 * d.objective_value.abs());
}

#[test]
fn verify_kkt_accepts_certificates_and_rejects_foreign_ones() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = common::rng(33);
    let p = common::random_problem(&mut rng, 2, 2, 3);
    let input = write_problem(dir.path(), &p, "p.json");
    let cert = dir.path().join("r.json");
    assert_eq!(run(&["riccati", "--input", s(&input), "--output", s(&cert)]), EXIT_OK);
    let report = dir.path().join("kkt.json");
    let args = ["verify-kkt", "--input", s(&input), "--primal", s(&cert), "--dual", s(&cert), "--output", s(&report)];
    assert_eq!(run(&args), EXIT_OK);
    let r = read_result(&report).unwrap();
    assert!(r.residuals.values().all(|&v| (0.0..=1e-8).contains(&v)), "{:?}", r.residuals);

    // Certificates of another problem do not satisfy this one's KKT system.
    let mut other = p.clone();
    other.q = other.q.scale(2.0);
    let other_input = write_problem(dir.path(), &other, "q.json");
    let other_cert = dir.path().join("other.json");
    assert_eq!(run(&["riccati", "--input", s(&other_input), "--output", s(&other_cert)]), EXIT_OK);
    let args = ["verify-kkt", "--input", s(&input), "--primal", s(&cert), "--dual", s(&other_cert), "--output", s(&report)];
    assert_eq!(run(&args), EXIT_INPUT);
}

#[test]
fn solver_exhaustion_maps_to_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_problem(dir.path(), &common::scalar(3), "p.json");
    let out = dir.path().join("r.json");
    let trace = dir.path().join("trace.csv");
    let args = ["solve-primal", "--input", s(&input), "--output", s(&out), "--max-iters", "20", "--trace", s(&trace), "--trace-every", "1"];
    assert_eq!(run(&args), EXIT_MAX_ITERS);
    let r: ResultFile = read_result(&out).unwrap();
    assert_eq!(r.solver_stats.unwrap().iterations, 20);
    let csv = std::fs::read_to_string(&trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iter,primal_res,dual_res,objective"));
    assert_eq!(lines.count(), 20);
}

#[test]
fn invalid_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"n":1,"m":1,"N":1,"A":[[1]],"B":[[1]],"Q":[[1]],"R":[[-1]],"Qf":[[1]],"W":[[1]],"Wf":[[1]]}"#)
        .unwrap();
    assert_eq!(run(&["riccati", "--input", s(&bad)]), EXIT_INPUT);
    assert_eq!(run(&["riccati", "--input", s(&dir.path().join("missing.json"))]), EXIT_INPUT);
    std::fs::write(&bad, "not json").unwrap();
    assert_eq!(run(&["solve-dual", "--input", s(&bad)]), EXIT_INPUT);
    let good = write_problem(dir.path(), &common::scalar(1), "p.json");
    assert_eq!(run(&["decentralized", "--input", s(&good), "--tol=-1"]), EXIT_INPUT);
    // No partition in the file.
    assert_eq!(run(&["decentralized", "--input", s(&good)]), EXIT_INPUT);
}

#[test]
fn binary_simulates_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_problem(dir.path(), &common::scalar(2), "p.json");
    let design = dir.path().join("design.json");
    let exe = env!("CARGO_BIN_EXE_lqgsdp");
    let status = Command::new(exe).args(["riccati", "--input", s(&input), "--output", s(&design)]).status().unwrap();
    assert!(status.success());
    let mut csvs = vec![];
    for run in 0..2 {
        let hist = dir.path().join(format!("hist{run}.csv"));
        let traj = dir.path().join(format!("traj{run}.csv"));
        let out = Command::new(exe)
            .args(["simulate", "--input", s(&input), "--gains", s(&design), "--replicates", "50", "--seed", "9"])
            .args(["--histogram", s(&hist), "--trajectories", s(&traj)])
            .output()
            .unwrap();
        assert!(out.status.success());
        let printed: ResultFile = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(printed.simulation.unwrap().replicates, 50);
        csvs.push((std::fs::read(&hist).unwrap(), std::fs::read(&traj).unwrap()));
    }
    assert_eq!(csvs[0], csvs[1]);
    let traj = String::from_utf8(csvs[0].1.clone()).unwrap();
    assert_eq!(traj.lines().next(), Some("k,replicate,x1,u1"));
    assert_eq!(traj.lines().count(), 1 + 50 * 3);
}

#[test]
fn export_listing_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_problem(dir.path(), &common::scalar(2), "p.json");
    let listing = dir.path().join("p.sdpa");
    let out = dir.path().join("r.json");
    assert_eq!(run(&["solve-primal", "--input", s(&input), "--export-sdpa", s(&listing), "--output", s(&out)]), EXIT_OK);
    let text = std::fs::File::open(&listing).unwrap();
    let lmi = lqgsdp::sdp::read_listing(std::io::BufReader::new(text)).unwrap();
    assert_eq!(lmi.num_vars, lqgsdp::sdp::build_primal_sdp(&common::scalar(2)).unwrap().num_vars);
}
