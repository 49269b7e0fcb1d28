//! End-to-end checks of the binary surface: flags, problem files, report
//! JSON, exit codes.

use std::process::Command;

fn momopt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_momopt"))
}

#[test]
fn finite_min_on_shifted_parabola() {
    let out = momopt()
        .args([
            "finite-min",
            "--vars",
            "x",
            "--objective",
            "x^2 - 2*x + 2",
            "--seed",
            "42",
        ])
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("valid report JSON");
    assert_eq!(json["status"], "Exact");
    let f_star = json["f_star"].as_f64().unwrap();
    assert!((f_star - 1.0).abs() < 1e-5, "f_star {f_star}");
    let pt = json["minimizers"][0]["point"][0].as_f64().unwrap();
    assert!((pt - 1.0).abs() < 1e-3);
}

#[test]
fn minimize_reports_bound_and_gap() {
    let out = momopt()
        .args([
            "minimize",
            "--vars",
            "x,y",
            "--objective",
            "x^2 + y^2 + 1",
            "--order",
            "1",
        ])
        .output()
        .expect("binary runs");
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let v = json["v_by_order"][0]["v_mom"].as_f64().unwrap();
    assert!((v - 1.0).abs() < 1e-6);
    let v_sos = json["v_by_order"][0]["v_sos"].as_f64().unwrap();
    assert!(v_sos <= v + 1e-8);
}

#[test]
fn problem_file_and_output_path() {
    let dir = std::env::temp_dir().join("momopt-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let problem = dir.join("problem.json");
    let report = dir.join("report.json");
    std::fs::write(
        &problem,
        r#"{"vars": ["x"], "objective": "x^4 - x^2", "inequalities": ["x"]}"#,
    )
    .unwrap();
    let out = momopt()
        .args([
            "finite-min",
            "--problem",
            problem.to_str().unwrap(),
            "--output",
            report.to_str().unwrap(),
        ])
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["status"], "Exact");
    let pt = json["minimizers"][0]["point"][0].as_f64().unwrap();
    assert!((pt - 0.5f64.sqrt()).abs() < 1e-3);
}

#[test]
fn infeasible_problem_exits_with_code_two() {
    // x = 0 and x = 1 cannot both hold.
    let out = momopt()
        .args([
            "minimize",
            "--vars",
            "x",
            "--objective",
            "x",
            "--eq",
            "x",
            "--eq",
            "x - 1",
            "--order",
            "1",
        ])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_input_exits_with_code_four() {
    let out = momopt()
        .args(["finite-min", "--vars", "x", "--objective", "x +"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(4));
    let out = momopt()
        .args(["finite-min", "--vars", "x", "--objective", "q"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn polar_min_gradient_case() {
    let out = momopt()
        .args([
            "polar-min",
            "--vars",
            "x,y",
            "--objective",
            "x^2 + y^2",
            "--polar-mode",
            "product",
        ])
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["status"], "Exact");
    let pt = &json["minimizers"][0]["point"];
    assert!(pt[0].as_f64().unwrap().abs() < 1e-3);
    assert!(pt[1].as_f64().unwrap().abs() < 1e-3);
}
