use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dbgd_harness::config::Config;
use dbgd_harness::HarnessError;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn dbgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dbgd")).args(args).env_remove("DBGD_WORKERS").output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TRACE_HEADER: &str = "k,f,g,grad_f_sq,grad_g_sq,lambda,d_sq,cos_theta,f_perp_sq,f_par_sq,delta_f,delta_g,potential,degenerate";

#[test]
fn toy_config_writes_five_traces_and_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("toy");
    let o = dbgd(&["run", configs().join("toy.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> =
        std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    let mut expected = vec![
        "dbgd-beta-1.csv",
        "penalty-lambda-1.csv",
        "penalty-lambda-10.csv",
        "penalty-lambda-100.csv",
        "penalty-lambda-1000.csv",
        "summary.csv",
    ];
    expected.sort();
    assert_eq!(names, expected);
    let trace = std::fs::read_to_string(out.join("dbgd-beta-1.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), TRACE_HEADER);
    assert_eq!(lines.count(), 1000);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 6);
    // The constant step exceeds 1/(L_f+L_g) for the box constants.
    assert!(stderr(&o).contains("warning: dbgd-beta-1"));
}

#[test]
fn matfac_grid_has_twenty_summary_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dbgd(&[
        "run",
        configs().join("matfac.json").to_str().unwrap(),
        "--iterations",
        "20",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 21);
}

#[test]
fn bundled_configs_validate_and_round_trip() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let o = dbgd(&["validate", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
        let cfg = Config::load(&path).unwrap();
        assert_eq!(Config::parse(&cfg.to_json()).unwrap(), cfg);
    }
}

#[test]
fn empty_grid_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"experiment": "grid", "problem": {"name": "toy"},
            "methods": [{"kind": "penalty", "lambda": []}],
            "run": {"iterations": 10, "step": {"constant": 0.01}, "x0": [0, 0]},
            "output": {"dir": "unused"}}"#,
    );
    let o = dbgd(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("methods[0]"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_rejected_with_a_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"experiment": "grid", "problem": {"name": "toy"},
            "methods": [{"kind": "dbgd", "beta": [1.0], "betta": 2}],
            "run": {"iterations": 10, "step": {"constant": 0.01}, "x0": [0, 0]},
            "output": {"dir": "unused"}}"#,
    );
    let o = dbgd(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("betta") && err.contains("line"), "{err}");
}

#[test]
fn divergence_exits_with_three_and_names_the_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{"experiment": "grid", "problem": {{"name": "quadratic", "n": 2}},
                "methods": [{{"kind": "penalty", "lambda": [0], "scale_step": false}}],
                "run": {{"iterations": 100, "step": {{"constant": 1e154}}, "x0": [3, 3]}},
                "output": {{"dir": "{}"}}}}"#,
            tmp.path().join("out").display()
        ),
    );
    let o = dbgd(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("penalty-lambda-0"), "{}", stderr(&o));
}

#[test]
fn wrong_dimension_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"experiment": "grid", "problem": {"name": "toy"},
            "methods": [{"kind": "dbgd", "beta": [1.0]}],
            "run": {"iterations": 10, "step": {"constant": 0.01}, "x0": [0, 0, 0]},
            "output": {"dir": "unused"}}"#,
    );
    assert_eq!(dbgd(&["run", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn rates_need_three_budgets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"experiment": "rates",
            "problems": [{"problem": {"name": "quadratic", "n": 2}, "x0": [0.5, 0.5]}],
            "p": [0], "k_grid": [10, 100], "output": {"dir": "unused"}}"#,
    );
    assert_eq!(dbgd(&["rates", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn rates_report_is_written() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dbgd(&["rates", configs().join("rates.json").to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("rates.json")).unwrap()).unwrap();
    assert_eq!(report["fits"].as_array().unwrap().len(), 4);
    assert_eq!(report["all_passed"], true);
}

fn casestudy(dir: &Path, inits: &str, cos_max: f64) -> Output {
    let cfg = write_config(
        dir,
        &format!(
            r#"{{"experiment": "casestudy", "problem": {{"name": "toy"}},
                "method": {{"kind": "dbgd", "beta": [1.0]}},
                "iterations": 200, "step": {{"constant": 0.005}},
                "initializations": {inits},
                "thresholds": {{"case1_lambda_max": 0.1, "case1_grad_f_sq_max": -1.0,
                                "case2_cos_max": {cos_max}, "case2_lambda_min": 10.0}},
                "output": {{"dir": "{}"}}}}"#,
            dir.join("out").display()
        ),
    );
    dbgd(&["casestudy", cfg.to_str().unwrap()])
}

#[test]
fn impossible_thresholds_classify_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let o = casestudy(tmp.path(), "[[-1.0, 1.0], [0.5, -0.5]]", -2.0);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let table = std::fs::read_to_string(tmp.path().join("out/casestudy.csv")).unwrap();
    assert!(table.lines().skip(1).all(|l| l.ends_with(",unclassified")));
}

#[test]
fn start_at_the_bilevel_optimum_is_case_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{"experiment": "casestudy", "problem": {{"name": "toy"}},
                "method": {{"kind": "dbgd", "beta": [1.0]}},
                "iterations": 50, "step": {{"constant": 0.005}},
                "initializations": [[{}, -1.0]],
                "output": {{"dir": "{}"}}}}"#,
            -std::f64::consts::PI / 20.0,
            tmp.path().join("out").display()
        ),
    );
    let o = dbgd(&["casestudy", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("case_i"));
}

#[test]
fn gradcheck_command() {
    let o = dbgd(&["gradcheck", "toy", "--seed", "3"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("toy: worst relative error"));
    assert_eq!(dbgd(&["gradcheck", "rosenbrock"]).status.code(), Some(2));
}

#[test]
fn bad_worker_override_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_dbgd"))
        .args(["run", configs().join("toy.json").to_str().unwrap(), "--out", "/nonexistent-never-written"])
        .env("DBGD_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn command_and_config_kind_must_agree() {
    let o = dbgd(&["rates", configs().join("toy.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn capability_errors_map_to_four() {
    assert_eq!(HarnessError::Core(dbgd::Error::Capability("lower_hvp")).exit_code(), 4);
    assert_eq!(HarnessError::in_cell("c", dbgd::Error::Divergence { iteration: 3, quantity: "f" }).exit_code(), 3);
    assert_eq!(HarnessError::Config("x".into()).exit_code(), 2);
}
