//! End-to-end checks of the `minibab` binary: exit codes, stats files, and
//! conflict-pool persistence across processes.

use std::fs;
use std::path::Path;
use std::process::Command;

fn minibab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_minibab"))
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path.to_str().unwrap().to_string()
}

const RELU_NET: &str = r#"{ "layers": [
    { "weights": [[1.0]], "bias": [0.0], "activation": "relu" },
    { "weights": [[1.0]], "bias": [0.0], "activation": "linear" }
] }"#;

#[test]
fn verify_writes_stats_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(dir.path(), "net.json", RELU_NET);
    let query = write(
        dir.path(),
        "query.json",
        r#"{ "input_lower": [1.0], "input_upper": [2.0],
             "output_constraints": [ { "coeffs": [1.0], "relation": "<=", "rhs": 0.0 } ] }"#,
    );
    let stats_path = dir.path().join("stats.json");
    let status = minibab()
        .args(["verify", "--network", &net, "--config", &query])
        .args(["--stats-out", stats_path.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&stats_path).unwrap()).unwrap();
    assert_eq!(stats["verdict"], "unsat");
}

#[test]
fn missing_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let query = write(dir.path(), "query.json", "{}");
    let status = minibab()
        .args([
            "verify",
            "--network",
            "/nonexistent/net.json",
            "--config",
            &query,
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn malformed_network_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(dir.path(), "net.json", "{ not json");
    let query = write(dir.path(), "query.json", "{}");
    let status = minibab()
        .args(["verify", "--network", &net, "--config", &query])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn stats_go_to_stdout_when_no_file_given() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(dir.path(), "net.json", RELU_NET);
    let query = write(
        dir.path(),
        "query.json",
        r#"{ "input_lower": [-1.0], "input_upper": [1.0],
             "output_constraints": [ { "coeffs": [1.0], "relation": ">=", "rhs": -1.0 } ] }"#,
    );
    let out = minibab()
        .args(["verify", "--network", &net, "--config", &query])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["verdict"], "sat");
    assert!(stats["witness"].is_array());
}

#[test]
fn radius_command_brackets_the_crossing_network() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(
        dir.path(),
        "net.json",
        r#"{ "layers": [ { "weights": [[-1.0],[1.0]], "bias": [1.0, 0.0], "activation": "linear" } ] }"#,
    );
    let config = write(
        dir.path(),
        "radius.json",
        r#"{ "x0": [0.0], "eps_min": 0.1, "eps_max": 1.0, "delta": 0.001,
             "budget_s": 30.0, "query_timeout_s": 5.0 }"#,
    );
    let out = minibab()
        .args(["radius", "--network", &net, "--config", &config])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let lo = stats["eps_lower"].as_f64().unwrap();
    let hi = stats["eps_upper"].as_f64().unwrap();
    assert!(lo <= 0.5 && 0.5 <= hi && hi - lo <= 0.001);
}

#[test]
fn split_command_reports_solve_stats() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(dir.path(), "net.json", RELU_NET);
    let config = write(
        dir.path(),
        "split.json",
        r#"{ "query": { "input_lower": [-1.0], "input_upper": [1.0],
                        "output_constraints": [ { "coeffs": [1.0], "relation": ">=", "rhs": 0.5 } ] },
             "t0_s": 5.0, "alpha": 1.5, "global_timeout_s": 60.0 }"#,
    );
    let out = minibab()
        .args(["split", "--network", &net, "--config", &config])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["verdict"], "sat");
    assert!(stats["nodes"].as_u64().unwrap() >= 1);
}

#[test]
fn explain_pool_round_trips_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(
        dir.path(),
        "net.json",
        r#"{ "layers": [
            { "weights": [[-1.0, 0.0],[0.0, 1.0],[0.5, 0.5]], "bias": [0.5, 0.0, -0.2], "activation": "relu" },
            { "weights": [[1.0, -1.0, 0.5],[-0.5, 1.0, 0.25]], "bias": [0.25, 0.0], "activation": "linear" }
        ] }"#,
    );
    let config = write(
        dir.path(),
        "explain.json",
        r#"{ "x0": [0.1, 0.1], "domain_lower": [-1.0, -1.0], "domain_upper": [1.0, 1.0],
             "query_timeout_s": 10.0, "budget_s": 60.0 }"#,
    );
    let pool = dir.path().join("pool.json");
    let out1 = minibab()
        .args(["explain", "--network", &net, "--config", &config])
        .args(["--pool-out", pool.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        out1.status.success(),
        "{}",
        String::from_utf8_lossy(&out1.stderr)
    );
    assert!(pool.exists());
    let s1: serde_json::Value = serde_json::from_slice(&out1.stdout).unwrap();

    let config2 = write(
        dir.path(),
        "explain2.json",
        r#"{ "x0": [0.1, 0.1], "domain_lower": [0.1, -1.0], "domain_upper": [0.1, 1.0],
             "query_timeout_s": 10.0, "budget_s": 60.0 }"#,
    );
    let out2 = minibab()
        .args(["explain", "--network", &net, "--config", &config2])
        .args(["--pool-in", pool.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        out2.status.success(),
        "{}",
        String::from_utf8_lossy(&out2.stderr)
    );
    let s2: serde_json::Value = serde_json::from_slice(&out2.stdout).unwrap();
    if s1["conflicts_recorded"].as_u64().unwrap() > 0 {
        assert!(s2["inherited_clauses"].as_u64().unwrap() > 0);
    }
    assert!(s2["fixed"].is_array());
}

#[test]
fn oracle_command_agrees_with_verify() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(dir.path(), "net.json", RELU_NET);
    let query = write(
        dir.path(),
        "query.json",
        r#"{ "input_lower": [-1.0], "input_upper": [1.0],
             "output_constraints": [ { "coeffs": [1.0], "relation": ">=", "rhs": 0.5 } ] }"#,
    );
    let verify: serde_json::Value = serde_json::from_slice(
        &minibab()
            .args(["verify", "--network", &net, "--config", &query])
            .output()
            .unwrap()
            .stdout,
    )
    .unwrap();
    let oracle: serde_json::Value = serde_json::from_slice(
        &minibab()
            .args(["oracle", "--network", &net, "--config", &query])
            .output()
            .unwrap()
            .stdout,
    )
    .unwrap();
    assert_eq!(verify["verdict"], oracle["verdict"]);
}
