//! End-to-end checks of the command-line binary: exit codes, artifact
//! schemas, and byte-level reproducibility of generated files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_soliton-forge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn json_file(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).expect("file readable")).expect("valid JSON")
}

fn write_problem(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const P2: &str = r#"{"lambda": 0.0, "k": 4.0, "n": 1, "A": 0.0, "B": 0.25, "C": 0.1,
  "s_min": 0.2, "s_max": 2.0, "alpha_init": 0.5}"#;

#[test]
fn classify_nil3_reports_unit_b() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "classify",
        "--model",
        "nil3",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let doc = json_file(&dir.path().join("classification.json"));
    assert_eq!(doc["tag"], "DeformedSasakian");
    assert!((doc["b"].as_f64().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn classify_deformed_sphere_scales_b() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "classify",
        "--model",
        "sphere3",
        "--deform",
        "1:0.5",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let doc = json_file(&dir.path().join("classification.json"));
    assert!((doc["b"].as_f64().unwrap() - 4.0).abs() < 1e-8);
    assert_eq!(doc["deformation"]["f"], 0.5);
}

#[test]
fn classify_rejects_unsupported_models() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(
        code(&run(&[
            "classify",
            "--model",
            "gaussian",
            "--output-dir",
            d
        ])),
        64
    );
    assert_eq!(
        code(&run(&["classify", "--model", "nope", "--output-dir", d])),
        64
    );
}

#[test]
fn solve_writes_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_problem(dir.path(), "p.json", P2);
    let run1 = dir.path().join("run1");
    let run2 = dir.path().join("run2");
    for run_dir in [&run1, &run2] {
        let out = run(&[
            "solve",
            "--problem",
            &problem,
            "--output-dir",
            run_dir.to_str().unwrap(),
        ]);
        assert_eq!(
            code(&out),
            0,
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for name in ["profile.csv", "residuals.csv", "solve.json"] {
        let a = fs::read(run1.join(name)).unwrap();
        let b = fs::read(run2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let profile = fs::read_to_string(run1.join("profile.csv")).unwrap();
    assert!(profile.starts_with("s,t,alpha,H,F,f\n"));
    let residuals = fs::read_to_string(run1.join("residuals.csv")).unwrap();
    assert!(residuals.starts_with("s,t,alpha,H,F,f,R1,R2_zeta,R2_horiz,R3,R4\n"));
    let summary = json_file(&run1.join("solve.json"));
    assert_eq!(summary["residuals_pass"], true);
    assert_eq!(summary["boundary"]["lower"]["class"], "RegularBoundary");
}

#[test]
fn solve_exit_codes_follow_failure_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();

    // 2s + A dips below zero inside the interval.
    let bad_w = write_problem(
        dir.path(),
        "w.json",
        r#"{"lambda": 0.0, "k": 4.0, "n": 1, "A": 0.0, "B": 0.25, "C": 0.1,
           "s_min": -0.5, "s_max": 2.0, "alpha_init": 0.5}"#,
    );
    assert_eq!(
        code(&run(&["solve", "--problem", &bad_w, "--output-dir", d])),
        65
    );

    // Strong shrinker forcing alpha to zero immediately.
    let collapse = write_problem(
        dir.path(),
        "c.json",
        r#"{"lambda": 5.0, "k": -4.0, "n": 1, "A": 0.0, "B": 0.0, "C": 0.0,
           "s_min": 0.2, "s_max": 2.0, "alpha_init": 0.001}"#,
    );
    let out = run(&["solve", "--problem", &collapse, "--output-dir", d]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));

    let malformed = write_problem(dir.path(), "m.json", "{\"lambda\": oops");
    assert_eq!(
        code(&run(&["solve", "--problem", &malformed, "--output-dir", d])),
        65
    );

    let missing = dir.path().join("missing.json");
    assert_eq!(
        code(&run(&[
            "solve",
            "--problem",
            missing.to_str().unwrap(),
            "--output-dir",
            d
        ])),
        66
    );
}

#[test]
fn solved_directory_verifies_and_detects_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_problem(dir.path(), "p.json", P2);
    let solved = dir.path().join("solved");
    let sd = solved.to_str().unwrap();
    assert_eq!(
        code(&run(&["solve", "--problem", &problem, "--output-dir", sd])),
        0
    );

    let out = run(&["verify", "--profile-dir", sd, "--output-dir", sd]);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json_file(&solved.join("verify.json"));
    assert_eq!(report["all_pass"], true);

    // Scale the H column by 1%; residual and coherence checks must trip.
    let text = fs::read_to_string(solved.join("profile.csv")).unwrap();
    let mut lines = text.lines();
    let mut perturbed = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let mut cols: Vec<String> = line.split(',').map(str::to_owned).collect();
        let h: f64 = cols[3].parse().unwrap();
        cols[3] = format!("{:.16e}", h * 1.01);
        perturbed.push_str(&cols.join(","));
        perturbed.push('\n');
    }
    fs::write(solved.join("profile.csv"), perturbed).unwrap();

    let out = run(&["verify", "--profile-dir", sd, "--output-dir", sd]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("verification failed"), "stderr: {stderr}");
    assert!(stderr.contains("r3"), "failing residuals named: {stderr}");
}

#[test]
fn verify_missing_profile_exits_66() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(
        code(&run(&["verify", "--profile-dir", d, "--output-dir", d])),
        66
    );
}

#[test]
fn verify_sphere_reports_phi_sectional() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "verify",
        "--model",
        "sphere3",
        "--check",
        "phi-sectional",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("phi-sectional = 1.0000000000000000e0"),
        "stdout: {stdout}"
    );
    let report = json_file(&dir.path().join("verify.json"));
    assert!((report["phi_sectional"].as_f64().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn verify_cigar_passes_all_identities() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "verify",
        "--model",
        "cigar",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json_file(&dir.path().join("verify.json"));
    assert_eq!(report["all_pass"], true);
}

#[test]
fn flag_validation_exits_65() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let small_grid = run(&[
        "classify",
        "--model",
        "nil3",
        "--grid-size",
        "8",
        "--output-dir",
        d,
    ]);
    assert_eq!(code(&small_grid), 65);
    let bad_tol = run(&[
        "classify",
        "--model",
        "nil3",
        "--tol",
        "bogus=1",
        "--output-dir",
        d,
    ]);
    assert_eq!(code(&bad_tol), 65);
    let bad_deform = run(&[
        "classify",
        "--model",
        "nil3",
        "--deform",
        "1:2:3:4",
        "--output-dir",
        d,
    ]);
    assert_eq!(code(&bad_deform), 65);
}

#[test]
fn tolerance_override_changes_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_problem(dir.path(), "p.json", P2);
    let sd = dir.path().join("s");
    let sdp = sd.to_str().unwrap();
    assert_eq!(
        code(&run(&["solve", "--problem", &problem, "--output-dir", sdp])),
        0
    );
    // An absurdly tight residual tolerance turns the same run into a failure.
    let strict = run(&[
        "solve",
        "--problem",
        &problem,
        "--output-dir",
        sdp,
        "--tol",
        "residual=1e-16",
    ]);
    assert_eq!(code(&strict), 1);
}

#[test]
fn report_emits_fit_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "report",
        "--model",
        "cigar",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json_file(&dir.path().join("report.json"));
    assert_eq!(report["transnormal"]["transnormal"], true);
    assert!(report["hess_spectrum"].is_null());
    let table = fs::read_to_string(dir.path().join("fit_table.csv")).unwrap();
    assert!(table.starts_with("f,b,a\n"));
    assert!(table.lines().count() > 3);
}
