//! End-to-end checks of the installed binary: exit codes, output files,
//! and the documented CSV shape.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn taskalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskalloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let out = tempfile::tempdir().unwrap();
    let result = taskalloc(&[
        "run",
        scenario("example2.toml").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");

    let csv = std::fs::read_to_string(out.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    // d = 2, M = 3: t, robot, 2x, 2u, 3 delta, 3 alpha, 3 pi_h.
    assert_eq!(header.split(',').count(), 2 + 2 + 2 + 3 + 3 + 3);
    assert_eq!(
        header,
        "t,robot,x0,x1,u0,u1,delta0,delta1,delta2,alpha0,alpha1,alpha2,pi_h0,pi_h1,pi_h2"
    );
    // One robot, 501 steps: one row per robot per step.
    let data_rows: Vec<&str> = lines.collect();
    assert_eq!(data_rows.len(), 501);
    for row in &data_rows {
        assert_eq!(row.split(',').count(), 13);
    }

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["steps"], 501);
    assert_eq!(summary["prop1_violations"], 0);

    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.path().join("prop1_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["count"], 0);
}

#[test]
fn unreadable_scenario_exits_one() {
    let out = tempfile::tempdir().unwrap();
    let result = taskalloc(&[
        "run",
        "/nonexistent/scenario.toml",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&result.stderr).is_empty());
}

#[test]
fn malformed_scenario_exits_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "dimension = [oops").unwrap();
    let result = taskalloc(&["validate", path.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&result.stderr).contains("line 1"));
}

#[test]
fn strict_monitor_tolerance_exits_two_with_report() {
    // A negative tolerance demands strictly negative task rates, which no
    // equilibrium can deliver; the run completes but the monitor trips.
    let out = tempfile::tempdir().unwrap();
    let result = taskalloc(&[
        "run",
        scenario("example2.toml").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--prop1-tol",
        "-1.0",
    ]);
    assert_eq!(result.status.code(), Some(2), "{result:?}");
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.path().join("prop1_report.json")).unwrap(),
    )
    .unwrap();
    assert!(report["count"].as_u64().unwrap() > 0);
}

#[test]
fn oracle_compare_reports_nonnegative_gap() {
    let result = taskalloc(&[
        "oracle-compare",
        scenario("example3.toml").to_str().unwrap(),
        "--time",
        "0.0",
    ]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let record: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&result.stdout)).unwrap();
    assert!(record["gap"].as_f64().unwrap() >= 0.0);
    assert!(record["bound_holds"].as_bool().unwrap());
    assert_eq!(record["oracle_assignment"].as_array().unwrap().len(), 3);
}

#[test]
fn oracle_compare_rejects_oversized_enumeration() {
    let result = taskalloc(&[
        "oracle-compare",
        scenario("example3.toml").to_str().unwrap(),
        "--time",
        "0.0",
        "--enum-cap",
        "8",
    ]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn validate_reports_capabilities_and_demand_warnings() {
    let result = taskalloc(&["validate", scenario("example3.toml").to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("all 3 tasks executable; full column rank"));
    assert!(!stdout.contains("warning: pi_star sums"));

    // Demand on a task nobody can execute must warn but still exit 0.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("undemandable.toml");
    std::fs::write(
        &path,
        r#"
dimension = 2
duration = 1.0
pi_star = [0.0, 1.0]

[[robots]]
start = [0.0, 0.0]
specialization = [1.0, 0.0]

[[tasks]]
type = "goto"
target = [1.0, 0.0]

[[tasks]]
type = "goto"
target = [0.0, 1.0]
"#,
    )
    .unwrap();
    let result = taskalloc(&["validate", path.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("warning: pi_star[1]"));
}
