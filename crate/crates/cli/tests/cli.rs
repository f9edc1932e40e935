use std::process::Command;

fn eikonal(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_eikonal")).args(args).output().expect("binary runs")
}

#[test]
fn lists_registered_scenarios() {
    let out = eikonal(&["verify", "--list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["all", "charts", "flat-exactness", "lp-battery", "parametrix", "structure", "taylor"] {
        assert!(text.contains(name), "{name} missing from:\n{text}");
    }
}

#[test]
fn parametrix_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = eikonal(&["parametrix", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("PASS"));
    for f in ["summary.csv", "parametrix.csv", "provenance.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn config_errors_exit_with_code_two() {
    let out = eikonal(&["verify", "--scenario", "parametrix", "--set", "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("no_such_key"));

    let out = eikonal(&["converge", "--levels", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failing_tolerance_exits_with_code_one() {
    let out = eikonal(&["parametrix", "--set", "tol.parametrix=1e-300"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}

#[test]
fn march_dumps_leaves() {
    let dir = tempfile::tempdir().unwrap();
    let out = eikonal(&["march", "--set", "epsilon=0.02", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let leaves = std::fs::read_to_string(dir.path().join("leaves.txt")).unwrap();
    assert!(leaves.starts_with("BASE "));
    assert!(dir.path().join("structure.csv").exists());
}
