use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aosbqp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aosbqp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_writes_results_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = aosbqp(&[
        "solve",
        "--case",
        "case30",
        "--variant",
        "relaxed-two",
        "--out-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let result = fs::read_to_string(dir.path().join("result.txt")).unwrap();
    assert!(result.contains("variant = relaxed-two"));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("outer,iteration,y_1,"));
    assert!(dir.path().join("timings.txt").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for format in ["text", "json"] {
        for d in [a.path(), b.path()] {
            let o = aosbqp(&[
                "solve",
                "--case",
                "case30",
                "--seed",
                "5",
                "--format",
                format,
                "--out-dir",
                d.to_str().unwrap(),
            ]);
            assert_eq!(o.status.code(), Some(0));
        }
        let name = if format == "text" { "result.txt" } else { "result.json" };
        let read = |p: &Path, f: &str| fs::read(p.join(f)).unwrap();
        assert_eq!(read(a.path(), name), read(b.path(), name));
        assert_eq!(read(a.path(), "trace.csv"), read(b.path(), "trace.csv"));
    }
}

#[test]
fn config_file_and_outer_cap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# one outer pass is not enough to settle\nouter_max_iters = 1\n").unwrap();
    let o = aosbqp(&[
        "solve",
        "--case",
        "case30",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));

    fs::write(&cfg, "beta = 0.5\n").unwrap();
    let o = aosbqp(&["solve", "--case", "case30", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("beta"));
}

#[test]
fn missing_case_is_reported() {
    let o = aosbqp(&["solve", "--case", "/nonexistent/case.m"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonexistent"));
}

#[test]
fn oracle_lists_every_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("five.cfg");
    fs::write(&cfg, "demand_set_mode = loaded\n").unwrap();
    let o = aosbqp(&[
        "oracle",
        "--case",
        "case5",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 9);
    assert!(dir.path().join("oracle.csv").exists());

    let o = aosbqp(&["oracle", "--case", "case30"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn check_and_scenario_subcommands() {
    let o = aosbqp(&["check", "--case", "case5", "--points", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 10);

    let o = aosbqp(&["scenario", "--case", "case30"]);
    assert_eq!(o.status.code(), Some(0));
    let case = aosbqp::parse_case(&stdout(&o)).unwrap();
    assert!((case.total_pd() - 4.392).abs() < 1e-9);
}

#[test]
fn over_generation_is_infeasible() {
    // minimum output of two units exceeds every possible load
    let text = aosbqp::cases::CASE5
        .replace("\t1\t100\t1\t520\t0;", "\t1\t100\t1\t520\t500;")
        .replace("\t1\t100\t1\t600\t0;", "\t1\t100\t1\t600\t580;");
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("over.m");
    fs::write(&case, text).unwrap();
    let o = aosbqp(&[
        "solve",
        "--case",
        case.to_str().unwrap(),
        "--no-scenario",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
