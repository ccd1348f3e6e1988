use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/scenarios").join(file)
}

fn crashrepro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crashrepro"))
        .args(args)
        .env_remove("CRASHREPRO_EVALUATION_BUDGET")
        .env_remove("CRASHREPRO_WALL_CLOCK_SECS")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn reproduce_writes_witness_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (scn, trace) = (corpus("free-chain.scn"), corpus("free-chain.trace"));
    let out = dir.path().join("out");
    let o = crashrepro(&["reproduce", "--scenario", s(&scn), "--trace", s(&trace), "--seed", "1", "--out", s(&out), "--dump-witness"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("target decode"));
    let reproduced = std::fs::read_to_string(out.join("reproduced.trace")).unwrap();
    let expected = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(reproduced.lines().take(4).collect::<Vec<_>>(), expected.lines().take(4).collect::<Vec<_>>());
    assert!(out.join("witness.genome").exists() && out.join("run.runlog").exists());
}

#[test]
fn unreproduced_crash_exits_one() {
    let (scn, trace) = (corpus("unsatisfiable-guard.scn"), corpus("unsatisfiable-guard.trace"));
    let o = Command::new(env!("CARGO_BIN_EXE_crashrepro"))
        .args(["reproduce", "--scenario", s(&scn), "--trace", s(&trace), "--seed", "2"])
        .env("CRASHREPRO_EVALUATION_BUDGET", "600")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("after 600 evaluations"));
}

#[test]
fn seed_is_required() {
    let (scn, trace) = (corpus("guarded-throw.scn"), corpus("guarded-throw.trace"));
    let o = crashrepro(&["reproduce", "--scenario", s(&scn), "--trace", s(&trace)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
}

#[test]
fn bad_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.trace");
    std::fs::write(&junk, "not a trace at all\n").unwrap();
    let scn = corpus("guarded-throw.scn");
    let o = crashrepro(&["reproduce", "--scenario", s(&scn), "--trace", s(&junk), "--seed", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = crashrepro(&["parse-trace", s(&junk)]);
    assert_eq!(o.status.code(), Some(2));
    let o = crashrepro(&["bench", "--suite", dir.path().to_str().unwrap(), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_exit_codes() {
    let o = crashrepro(&["oracle", "--scenario", s(&corpus("state-machine.scn")), "--trace", s(&corpus("state-machine.trace"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("reachable\n"));
    let o = crashrepro(&[
        "oracle",
        "--scenario",
        s(&corpus("config-unreachable.scn")),
        "--trace",
        s(&corpus("config-unreachable.trace")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = crashrepro(&[
        "oracle",
        "--scenario",
        s(&corpus("acc104-analog.scn")),
        "--trace",
        s(&corpus("acc104-analog.trace")),
        "--max-calls",
        "12",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn parse_trace_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    let py = dir.path().join("t.txt");
    std::fs::write(&py, "Traceback (most recent call last):\n  File \"pkg/calc.py\", line 9, in ratio\n    x\nZeroDivisionError: division by zero\n").unwrap();
    let o = crashrepro(&["parse-trace", s(&py), "--grammar", "script-runtime"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "ZeroDivisionError: division by zero\n\tat pkg.calc.ratio(pkg/calc.py:9)\n");
    let o = crashrepro(&["parse-trace", s(&py), "--grammar", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_writes_reports_and_archive() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    std::fs::create_dir(&suite).unwrap();
    for name in ["guarded-throw", "unsatisfiable-guard"] {
        for ext in ["scn", "trace"] {
            std::fs::copy(corpus(&format!("{name}.{ext}")), suite.join(format!("{name}.{ext}"))).unwrap();
        }
    }
    let out = dir.path().join("out");
    let o = crashrepro(&[
        "bench", "--suite", s(&suite), "--repetitions", "3", "--evaluation-budget", "1100", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(stdout(&o), table);
    assert!(table.contains("GT-7") && table.contains("N (0%)"));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.contains("UG-1,3,0,3,0,N,0"), "{csv}");
    for seed in 0..3 {
        assert!(out.join(format!("runs/GT-7/{seed}.runlog")).exists());
    }
}

#[test]
fn script_target_reproduce() {
    if Command::new("python3").arg("--version").output().is_err() {
        return;
    }
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/script");
    let o = crashrepro(&[
        "reproduce",
        "--script-target",
        s(&fixtures.join("calc.toml")),
        "--trace",
        s(&fixtures.join("ratio.trace")),
        "--seed",
        "5",
        "--evaluation-budget",
        "400",
        "--dump-witness",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains(".ratio()"));
}
