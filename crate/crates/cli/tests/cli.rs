use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn riskstop(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskstop"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn report(dir: &Path) -> String {
    fs::read_to_string(dir.join("report.txt")).expect("report written")
}

fn value<'a>(report: &'a str, key: &str) -> Option<&'a str> {
    report.lines().find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
}

#[test]
fn ex3_gap_example_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskstop(&["example", "ex3", "--alpha", "0.5", "--c", "0.5"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    assert_eq!(value(&r, "verdict"), Some("non-unique"));
    assert_eq!(value(&r, "regime"), Some("gap"));
    assert_eq!(value(&r, "result"), Some("pass"));
    assert!(!r.contains("= fail"));
    let csv = fs::read_to_string(dir.path().join("values.csv")).unwrap();
    assert!(csv.starts_with("state,u,w,u_oracle,w_oracle\n"));
}

#[test]
fn every_report_carries_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskstop(&["simulate", "ex3", "--seed", "5", "--n-traj", "1000"], dir.path());
    assert_eq!(code(&o), 0);
    let r = report(dir.path());
    assert_eq!(value(&r, "seed"), Some("5"));
    let hash = value(&r, "config_sha256").unwrap();
    assert_eq!(hash.len(), 64);
    let other = tempfile::tempdir().unwrap();
    riskstop(&["simulate", "ex3", "--seed", "6", "--n-traj", "1000"], other.path());
    assert_ne!(value(&report(other.path()), "config_sha256"), Some(hash));
}

#[test]
fn invalid_alpha_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&riskstop(&["solve", "ex3", "--alpha", "1.5"], dir.path())), 1);
}

#[test]
fn stochastic_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&riskstop(&["simulate", "ex3"], dir.path())), 1);
}

#[test]
fn pareto_diagnosis_is_divergent() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskstop(&["diagnose", "ex1", "--c", "0.5"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(value(&report(dir.path()), "verdict"), Some("divergent"));
}

#[test]
fn divergent_target_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskstop(&["simulate", "ex1", "--seed", "1", "--x0", "1", "--stop-on", "3"], dir.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn non_convergence_exits_2_with_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskstop(&["solve", "ex3", "--alpha", "0.2", "--max-iter", "5"], dir.path());
    assert_eq!(code(&o), 2);
    assert_eq!(value(&report(dir.path()), "converged"), Some("false"));
    assert!(dir.path().join("values.csv").exists());
}

#[test]
fn budget_overrun_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dyadic.toml");
    fs::write(
        &cfg,
        "command = \"dyadic\"\n[model]\nfamily = \"ex5\"\n[numeric]\nt_grid = [5.0]\nm = [2]\nbudget_limit = 1e-30\n",
    )
    .unwrap();
    let o = riskstop(&["dyadic", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_drives_a_table_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("table.toml");
    fs::write(
        &cfg,
        r#"command = "solve"
[model]
family = "table"
x0 = 0
[[model.states]]
x = 0
g = 0.2
G = 1.0
next = [[0, 0.5], [1, 0.5]]
[[model.states]]
x = 1
g = 0.3
G = 0.5
next = [[0, 1.0]]
[numeric]
tol = 1e-12
[output]
formats = ["csv"]
"#,
    )
    .unwrap();
    let o = riskstop(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("report.txt").exists());
    let csv = fs::read_to_string(dir.path().join("values.csv")).unwrap();
    // v(1) = min(0.5, 0.3 + v(0)) = 0.5 and v(0) = 0.2 + ln((e^v0 + e^0.5) / 2) < 1.
    let row0: Vec<f64> = csv.lines().nth(1).unwrap().split(',').skip(1).take(2).map(|c| c.parse().unwrap()).collect();
    let v0 = row0[0];
    assert!((v0 - (0.2 + ((v0.exp() + 0.5f64.exp()) / 2.0).ln())).abs() < 1e-10);
    assert!((row0[1] - v0).abs() < 1e-10);
}

#[test]
fn bad_config_files_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[model]\nfamily = \"ex3\"\nbogus = 1\n").unwrap();
    assert_eq!(code(&riskstop(&["solve", "--config", cfg.to_str().unwrap()], dir.path())), 1);
    fs::write(&cfg, "command = \"simulate\"\n[model]\nfamily = \"ex3\"\n").unwrap();
    assert_eq!(code(&riskstop(&["solve", "--config", cfg.to_str().unwrap()], dir.path())), 1);
    assert_eq!(code(&riskstop(&["solve", "--config", "/nonexistent.toml"], dir.path())), 1);
}

#[test]
fn traces_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskstop(&["simulate", "ex3", "--alpha", "0.9", "--seed", "2", "--n-traj", "100", "--traces", "3"], dir.path());
    assert_eq!(code(&o), 0);
    let t = fs::read_to_string(dir.path().join("traces.csv")).unwrap();
    assert!(t.starts_with("traj_id,step,state,action,running_cost\n"));
    let stops = t.lines().filter(|l| l.contains(",stop,")).count();
    assert_eq!(stops, 3);
}

#[test]
fn threads_env_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_riskstop"))
        .args(["example", "ex3", "--out"])
        .arg(dir.path())
        .env("RISKSTOP_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}
