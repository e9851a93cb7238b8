//! Drives the compiled binary end to end: subcommands, report formats and
//! the 0/1/2 exit-code contract.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polymoment"))
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("polymoment-bin-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn curve_file() -> PathBuf {
    temp_file(
        "curve.csv",
        "maturity,price\n0.0,1.0\n1.0,1.1\n2.0,1.2\n4.0,1.4\n",
    )
}

fn small_config() -> PathBuf {
    temp_file("config.json", r#"{"mc": {"n_paths": 20000}}"#)
}

#[test]
fn moments_validate_passes_and_embeds_config_hash() {
    let output = bin()
        .args(["--config"])
        .arg(small_config())
        .args(["moments", "--k", "2", "--s", "0.5", "--t", "1.0", "--curve"])
        .arg(curve_file())
        .arg("--validate")
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).expect("JSON report");
    assert_eq!(report["result"]["order_k"], 2);
    assert_eq!(report["oracle"]["pass"], true);
    assert!(report["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn malformed_curve_exits_one_with_line_number() {
    let bad = temp_file("bad.csv", "maturity,price\n0.0,1.0\nnot-a-number,2.0\n");
    let output = bin()
        .args(["moments", "--k", "1", "--s", "0.0", "--t", "1.0", "--curve"])
        .arg(bad)
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
}

#[test]
fn price_command_reports_diagnostics() {
    let request = temp_file(
        "request.json",
        &format!(
            r#"{{"payoff": {{"kind": "call", "strike": 1.0, "degree": 16, "domain_M": 4.0}},
                "s": 0.0, "t": 1.0, "x": 1.0, "curve_file": "{}"}}"#,
            curve_file().display()
        ),
    );
    let output = bin()
        .args(["--config"])
        .arg(small_config())
        .args(["price", "--request"])
        .arg(request)
        .arg("--mc-check")
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).expect("JSON report");
    assert!(report["price"].as_f64().unwrap() > 0.0);
    assert!(
        report["diagnostics"]["bernstein_sup_error"]
            .as_f64()
            .unwrap()
            > 0.0
    );
    assert_eq!(report["mc_check"]["agrees"], true);
}

#[test]
fn counterexample_exit_zero_and_text_report() {
    let output = bin().arg("counterexample").output().expect("binary runs");
    assert!(output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("INCONSISTENT"));
    assert!(stderr.contains("CONTRADICTION"));
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).expect("JSON report");
    assert_eq!(
        report["part2_not_generalized_polynomial"]["d2_closed_form"],
        serde_json::json!([2.0, 3.0, 3.0, 2.0])
    );
}

#[test]
fn simulate_writes_reproducible_csv() {
    let out_a = std::env::temp_dir().join("polymoment-bin-tests/path_a.csv");
    let out_b = std::env::temp_dir().join("polymoment-bin-tests/path_b.csv");
    for out in [&out_a, &out_b] {
        let status = bin()
            .args(["--seed", "7", "--out"])
            .arg(out)
            .args(["simulate", "--t-end", "0.5", "--dt", "0.1"])
            .status()
            .expect("binary runs");
        assert!(status.success());
    }
    let a = std::fs::read_to_string(&out_a).unwrap();
    let b = std::fs::read_to_string(&out_b).unwrap();
    assert_eq!(a, b, "same seed must give the same path");
    assert!(a.starts_with("t,x0,"));
    assert_eq!(a.lines().count(), 7);
}

#[test]
fn unknown_config_key_exits_one() {
    let bad_config = temp_file("bad_config.json", r#"{"grid": {"n_pts": 16}}"#);
    let output = bin()
        .args(["--config"])
        .arg(bad_config)
        .args(["counterexample"])
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(1));
}
