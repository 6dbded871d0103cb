use std::fs;
use std::path::Path;

use sshqp::cli::{main_with, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK};

fn run(out: &Path, args: &[&str]) -> i32 {
    let mut full = vec!["sshqp".to_string(), "--out-dir".to_string(), out.display().to_string()];
    full.extend(args.iter().map(|s| s.to_string()));
    main_with(full)
}

fn problem(name: &str) -> String {
    format!("{}/problems/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn solve_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["solve", &problem("circle_then_height.toml")]), EXIT_OK);
    for f in ["summary.csv", "trace.csv", "x.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["solve", "no/such/file.toml"]), EXIT_INPUT);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "variables = 2\n[[level]]\nnorm = \"l1\"\n").unwrap();
    assert_eq!(run(dir.path(), &["solve", bad.to_str().unwrap()]), EXIT_INPUT);
    assert_eq!(run(dir.path(), &["frobnicate"]), EXIT_INPUT);
}

#[test]
fn iteration_cap_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(dir.path(), &["--max-iter", "1", "solve", &problem("circle_then_height.toml")]);
    assert_eq!(code, EXIT_NOT_CONVERGED);
    assert!(dir.path().join("summary.csv").exists());
}

#[test]
fn seeded_outputs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        assert_eq!(run(dir.path(), &["bench-table1"]), EXIT_OK);
        assert_eq!(run(dir.path(), &["--seed", "3", "scenario", "continuous-select"]), EXIT_OK);
    }
    for f in ["table1.csv", "continuous_select.csv"] {
        let x = fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.path().join(f)).unwrap(), "{f} differs between runs");
    }
}
