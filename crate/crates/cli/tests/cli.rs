use std::fs;
use std::process::{Command, Output};

use jpp_core::io::{read_runs_json, CSV_HEADER};

fn jpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jpp")).args(args).output().unwrap()
}

#[test]
fn csv_to_stdout_and_summary_to_stderr() {
    let out = jpp(&["--n", "64", "--seeds", "2", "--mode", "push"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().next().unwrap(), CSV_HEADER.join(","));
    assert!(stdout.lines().skip(1).all(|l| l.contains(",push,")));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("n,mode,c,b,failure_scale,runs"));
    assert_eq!(stderr.lines().count(), 2);
}

#[test]
fn files_next_to_out() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.json");
    let out = jpp(&[
        "--n",
        "128",
        "--n",
        "256",
        "--seed-list",
        "3,5",
        "--mode",
        "jpp",
        "--format",
        "json",
        "--analyze",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let runs = read_runs_json(fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(runs.len(), 4);
    assert_eq!(runs.iter().map(|t| t.meta.run_id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    assert_eq!(runs[1].meta.seed, 5);
    assert_eq!(runs[2].meta.n, 256);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("sweep.summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
    let analysis: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("sweep.analysis.json")).unwrap()).unwrap();
    assert_eq!(analysis.as_array().unwrap().len(), 2);
}

#[test]
fn parallel_output_is_identical() {
    let args = ["--n", "100,200", "--seeds", "4", "--mode", "jpp,pull", "--failure-scale", "1"];
    let a = jpp(&args);
    let b = jpp(&[&args[..], &["--parallel", "3"]].concat());
    let c = jpp(&[&args[..], &["--parallel"]].concat());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert_eq!(a.stderr, b.stderr);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(jpp(&["--n", "64", "--bogus"]).status.code(), Some(2));
    assert_eq!(jpp(&["--seeds", "3"]).status.code(), Some(2));
    assert_eq!(jpp(&["--n", "64", "--mode", "gossip"]).status.code(), Some(2));
    let out = jpp(&["--n", "64", "--non-exact", "--rho", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho"));
    assert_eq!(jpp(&["--n", "1"]).status.code(), Some(2));
    assert_eq!(jpp(&["--n", "8", "--start-node", "9"]).status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    let out = jpp(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--failure-timing"));
}

#[test]
fn non_exact_without_rho_warns() {
    let out = jpp(&["--n", "64", "--non-exact", "--c", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: --non-exact without --rho"));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("out.csv");
    let out = jpp(&["--n", "16", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn incomplete_runs_are_data() {
    // heavy per-round failures leave nodes uninformed; still exit 0
    let out = jpp(&["--n", "256", "--mode", "push", "--failure-scale", "16", "--failure-timing", "per-round"]);
    assert_eq!(out.status.code(), Some(0));
}
