//! End-to-end checks of the `e2loop` binary: exit codes, diagnostics and
//! artifact placement.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn e2loop(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_e2loop"))
        .args(args)
        .current_dir(cwd)
        .env_remove("E2LOOP_OUT")
        .output()
        .expect("spawn e2loop")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn fig6b_with(from: &str, to: &str) -> String {
    let src = fs::read_to_string(scenarios().join("fig6b.toml")).unwrap();
    assert!(src.contains(from));
    src.replacen(from, to, 1)
}

#[test]
fn run_passes_and_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("art");
    let scen = scenarios().join("fig6b.toml");
    let o = e2loop(&["run", scen.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    assert!(stdout.contains("PASS capped slice 1"), "{stdout}");
    for f in ["cell.csv", "ue.csv", "e2agent.log", "summary.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().ends_with("result: PASS\n"));
}

#[test]
fn default_out_dir_and_env_override() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = scenarios().join("fig6b.toml");
    let o = e2loop(&["run", scen.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(tmp.path().join("out/fig6b/cell.csv").is_file());

    let env_dir = tmp.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_e2loop"))
        .args(["run", scen.to_str().unwrap()])
        .current_dir(tmp.path())
        .env("E2LOOP_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(env_dir.join("cell.csv").is_file());

    // --out beats the environment.
    let flag_dir = tmp.path().join("from-flag");
    let o = Command::new(env!("CARGO_BIN_EXE_e2loop"))
        .args(["run", scen.to_str().unwrap(), "--out", flag_dir.to_str().unwrap()])
        .current_dir(tmp.path())
        .env("E2LOOP_OUT", tmp.path().join("unused"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.join("cell.csv").is_file());
    assert!(!tmp.path().join("unused").exists());
}

#[test]
fn failing_assertion_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("wrong.toml");
    fs::write(&path, fig6b_with("expect = 48.0", "expect = 60.0")).unwrap();
    let o = e2loop(&["run", path.to_str().unwrap(), "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stdout).contains("FAIL capped slice 1"));
}

#[test]
fn bad_config_exits_two_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, fig6b_with("profile = \"oai-like\"", "profile = \"nokia-like\"")).unwrap();
    let o = e2loop(&["run", path.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    let line = err.lines().next().unwrap();
    assert!(line.starts_with(&format!("{}:9:", path.display())), "{err}");
    assert!(!tmp.path().join("out").exists());

    let o = e2loop(&["run", "does-not-exist.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_reports_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = scenarios().join("fig7.toml");
    let o = e2loop(&["validate", scen.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));

    // Two slices each claiming 60% minimum on one cell.
    let path = tmp.path().join("overbooked.toml");
    let src = fig6b_with("quota = [5, 20, 100]", "quota = [5, 60, 100]").replacen(
        "quota = [5, 20, 100]",
        "quota = [5, 60, 100]",
        1,
    );
    fs::write(&path, src).unwrap();
    let o = e2loop(&["validate", path.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    assert!(err.starts_with(&format!("{}:", path.display())), "{err}");
}

#[test]
fn ci_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(e2loop(&["ci", "empty"], tmp.path()).status.code(), Some(2));
    assert_eq!(e2loop(&["ci", "missing"], tmp.path()).status.code(), Some(2));

    let suite = tmp.path().join("suite");
    fs::create_dir(&suite).unwrap();
    fs::write(suite.join("a.toml"), fig6b_with("name = \"fig6b\"", "name = \"good\"")).unwrap();
    let bad = fig6b_with("expect = 48.0", "expect = 60.0").replacen("name = \"fig6b\"", "name = \"bad\"", 1);
    fs::write(suite.join("b.toml"), bad).unwrap();
    let o = e2loop(&["ci", "suite", "--out", "ci-out"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let stdout = text(&o.stdout);
    assert!(stdout.contains("PASS good") && stdout.contains("FAIL bad"), "{stdout}");
    let summary: String = fs::read_to_string(tmp.path().join("ci-out/summary.json")).unwrap();
    assert!(summary.contains("\"passed\": 1") && summary.contains("\"failed\": 1"), "{summary}");

    fs::remove_file(suite.join("b.toml")).unwrap();
    assert_eq!(e2loop(&["ci", "suite"], tmp.path()).status.code(), Some(0));
    assert!(tmp.path().join("out/ci/summary.json").is_file());
}
