//! End-to-end command-line tests: every command against real files in a
//! temporary directory, checking exit codes, outputs, and the
//! solve → verify contract.

use attropt::cli::{self, SolutionFile, VerifyReport};
use std::path::{Path, PathBuf};
use tempfile::TempDir;

fn run_cmd(args: &[&str]) -> (i32, String, String) {
    let argv: Vec<String> = std::iter::once("attropt".to_string())
        .chain(args.iter().map(|s| s.to_string()))
        .collect();
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn write_file(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn singleton_instance(dir: &TempDir, lo: f64, hi: f64) -> PathBuf {
    write_file(
        dir,
        "instance.json",
        &format!(
            r#"{{
                "schema_version": 1,
                "model": "mnl",
                "form": "adjusted",
                "phi": [[1.0]],
                "psi": [0.0],
                "x_lower": [[{lo}]],
                "x_upper": [[{hi}]]
            }}"#
        ),
    )
}

fn read_solution(path: &Path) -> SolutionFile {
    cli::parse_solution(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_then_verify_forced_singleton() {
    let dir = TempDir::new().unwrap();
    let inst = singleton_instance(&dir, 1.0, 1.0);
    let sol = dir.path().join("solution.json");

    let (code, _, _) = run_cmd(&[
        "solve",
        inst.to_str().unwrap(),
        "--out",
        sol.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    let file = read_solution(&sol);
    assert_eq!(file.status, "optimal");
    let expect = (-1.0f64).exp() / (1.0 + (-1.0f64).exp());
    assert!((file.objective.unwrap() - expect).abs() < 1e-6);
    assert!((file.x.as_ref().unwrap()[0][0] - 1.0).abs() < 1e-6);

    let (code, stdout, _) = run_cmd(&["verify", inst.to_str().unwrap(), sol.to_str().unwrap()]);
    assert_eq!(code, 0, "verify should pass on the solver's own output");
    let report: VerifyReport = serde_json::from_str(&stdout).unwrap();
    assert!(report.passed);
}

#[test]
fn solve_writes_to_stdout_without_out_flag() {
    let dir = TempDir::new().unwrap();
    let inst = singleton_instance(&dir, 0.0, 2.0);
    let (code, stdout, _) = run_cmd(&["solve", inst.to_str().unwrap()]);
    assert_eq!(code, 0);
    let file: SolutionFile = serde_json::from_str(&stdout).unwrap();
    assert_eq!(file.status, "optimal");
}

#[test]
fn tampered_solution_is_detected() {
    let dir = TempDir::new().unwrap();
    let inst = singleton_instance(&dir, 0.0, 2.0);
    let sol = dir.path().join("solution.json");
    let (code, _, _) = run_cmd(&[
        "solve",
        inst.to_str().unwrap(),
        "--out",
        sol.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    let mut file = read_solution(&sol);
    file.x.as_mut().unwrap()[0][0] += 0.1;
    std::fs::write(&sol, cli::to_canonical_json(&file).unwrap()).unwrap();

    let (code, stdout, _) = run_cmd(&["verify", inst.to_str().unwrap(), sol.to_str().unwrap()]);
    assert_eq!(code, 1);
    let report: VerifyReport = serde_json::from_str(&stdout).unwrap();
    assert!(!report.passed);
    assert!(
        report.share_residual > 1e-6,
        "perturbing x must show up as a share residual, got {}",
        report.share_residual
    );
}

#[test]
fn unsatisfiable_share_floor_exits_two_with_certificate() {
    let dir = TempDir::new().unwrap();
    let inst = write_file(
        &dir,
        "infeasible.json",
        r#"{
            "schema_version": 1,
            "model": "mnl",
            "form": "adjusted",
            "phi": [[1.0]],
            "psi": [0.0],
            "x_lower": [[1.0]],
            "x_upper": [[5.0]],
            "resources": {"Gamma": [[1.0]], "gamma_rhs": [0.99]}
        }"#,
    );
    let sol = dir.path().join("solution.json");
    let (code, _, _) = run_cmd(&[
        "solve",
        inst.to_str().unwrap(),
        "--out",
        sol.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    let file = read_solution(&sol);
    assert_eq!(file.status, "infeasible");
    assert!(
        file.certificate_residual.unwrap() <= 1e-6,
        "certificate residual {} too large",
        file.certificate_residual.unwrap()
    );
}

#[test]
fn schema_violations_exit_four_with_field_paths() {
    let dir = TempDir::new().unwrap();
    let bad = write_file(
        &dir,
        "bad.json",
        r#"{
            "schema_version": 1,
            "model": "mnl",
            "form": "adjusted",
            "bogus_field": true,
            "phi": [[1.0]],
            "psi": [0.0],
            "x_lower": [[0.0]],
            "x_upper": [[1.0]]
        }"#,
    );
    let (code, _, stderr) = run_cmd(&["solve", bad.to_str().unwrap()]);
    assert_eq!(code, 4);
    assert!(stderr.contains("bogus_field"), "diagnostic was: {stderr}");

    // A missing file is an input error too.
    let (code, _, _) = run_cmd(&["solve", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(code, 4);

    // Nested paths are spelled out.
    let bad_nest = write_file(
        &dir,
        "bad_nest.json",
        r#"{
            "schema_version": 1,
            "model": "nl",
            "form": "adjusted",
            "nests": [{"gamma": 1.0, "rho_shared": [1.0], "psi": [0.0],
                       "x_lower": [[0.0]], "x_upper": [[1.0]], "oops": 3}]
        }"#,
    );
    let (code, _, stderr) = run_cmd(&["solve", bad_nest.to_str().unwrap()]);
    assert_eq!(code, 4);
    assert!(stderr.contains("nests"), "diagnostic was: {stderr}");
}

#[test]
fn oracle_command_agrees_on_a_singleton() {
    let dir = TempDir::new().unwrap();
    let inst = singleton_instance(&dir, 0.0, 2.0);
    let (code, stdout, _) = run_cmd(&[
        "oracle",
        inst.to_str().unwrap(),
        "--grid",
        "41",
        "--refine",
        "2",
    ]);
    assert_eq!(code, 0, "oracle output: {stdout}");
    assert!(stdout.contains("\"agreement\""));
}

#[test]
fn adjust_rewrites_raw_to_the_same_optimum() {
    let dir = TempDir::new().unwrap();
    let raw = write_file(
        &dir,
        "raw.json",
        r#"{
            "schema_version": 1,
            "model": "mnl",
            "form": "raw",
            "alpha": [0.5],
            "beta": [[2.0]],
            "margin_raw": [[0.5]],
            "cost_raw": [0.1],
            "y_lower": [[0.3]],
            "y_upper": [[2.0]]
        }"#,
    );
    let adjusted = dir.path().join("adjusted.json");
    let (code, _, _) = run_cmd(&[
        "adjust",
        raw.to_str().unwrap(),
        "--out",
        adjusted.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    let (code, raw_out, _) = run_cmd(&["solve", raw.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (code, adj_out, _) = run_cmd(&["solve", adjusted.to_str().unwrap()]);
    assert_eq!(code, 0);
    let raw_sol: SolutionFile = serde_json::from_str(&raw_out).unwrap();
    let adj_sol: SolutionFile = serde_json::from_str(&adj_out).unwrap();
    assert!((raw_sol.objective.unwrap() - adj_sol.objective.unwrap()).abs() < 1e-8);
    // The raw solve additionally reports raw coordinates consistent with
    // the affine map: x = beta·y − alpha/K.
    let y = raw_sol.y_raw.as_ref().unwrap()[0][0];
    let x = raw_sol.x.as_ref().unwrap()[0][0];
    assert!((2.0 * y - 0.5 - x).abs() < 1e-9);
}

#[test]
fn markov_chain_solve_verify_roundtrip() {
    let dir = TempDir::new().unwrap();
    let inst = write_file(
        &dir,
        "mc.json",
        r#"{
            "schema_version": 1,
            "model": "mc",
            "form": "adjusted",
            "phi": [[1.0], [0.8]],
            "psi": [0.1, 0.0],
            "x_lower": [[0.0], [0.0]],
            "x_upper": [[2.0], [2.0]],
            "lambda": [0.6, 0.4],
            "rho": [[0.0, 0.3], [0.2, 0.0]]
        }"#,
    );
    let sol = dir.path().join("solution.json");
    let (code, _, _) = run_cmd(&[
        "solve",
        inst.to_str().unwrap(),
        "--out",
        sol.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let file = read_solution(&sol);
    assert!(file.shares.as_ref().unwrap().visits.is_some());
    let (code, _, _) = run_cmd(&["verify", inst.to_str().unwrap(), sol.to_str().unwrap()]);
    assert_eq!(code, 0);
}

#[test]
fn nested_logit_shared_and_split_forms_roundtrip() {
    let dir = TempDir::new().unwrap();
    let shared = write_file(
        &dir,
        "nl_shared.json",
        r#"{
            "schema_version": 1,
            "model": "nl",
            "form": "adjusted",
            "nests": [
                {"gamma": 0.5, "rho_shared": [1.0], "psi": [0.1, 0.2],
                 "x_lower": [[0.0], [0.0]], "x_upper": [[2.0], [2.0]]},
                {"gamma": 1.0, "rho_shared": [0.8], "psi": [0.0],
                 "x_lower": [[0.0]], "x_upper": [[2.0]]}
            ]
        }"#,
    );
    let sol = dir.path().join("nl_shared_solution.json");
    let (code, _, _) = run_cmd(&[
        "solve",
        shared.to_str().unwrap(),
        "--out",
        sol.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (code, _, _) = run_cmd(&["verify", shared.to_str().unwrap(), sol.to_str().unwrap()]);
    assert_eq!(code, 0);

    let split = write_file(
        &dir,
        "nl_split.json",
        r#"{
            "schema_version": 1,
            "model": "nl",
            "form": "adjusted",
            "shared_attr": 0,
            "nests": [
                {"gamma": 0.5,
                 "phi": [[1.0, 0.7], [1.0, 1.3]],
                 "psi": [0.1, 0.2],
                 "x_lower": [[0.0, 0.0], [0.0, 0.0]],
                 "x_upper": [[2.0, 2.0], [2.0, 2.0]]}
            ]
        }"#,
    );
    let sol = dir.path().join("nl_split_solution.json");
    let (code, _, _) = run_cmd(&[
        "solve",
        split.to_str().unwrap(),
        "--out",
        sol.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let file = read_solution(&sol);
    // The written attributes are in the file's own per-product coordinates.
    assert_eq!(file.x.as_ref().unwrap()[0].len(), 2);
    let (code, stdout, _) = run_cmd(&["verify", split.to_str().unwrap(), sol.to_str().unwrap()]);
    assert_eq!(code, 0, "split verify report: {stdout}");
}

#[test]
fn dual_summaries_for_all_three_models() {
    let dir = TempDir::new().unwrap();
    let mnl = singleton_instance(&dir, 0.0, 2.0);
    let mc = write_file(
        &dir,
        "mc.json",
        r#"{
            "schema_version": 1,
            "model": "mc",
            "form": "adjusted",
            "phi": [[1.0]],
            "psi": [0.0],
            "x_lower": [[0.0]],
            "x_upper": [[2.0]],
            "lambda": [1.0],
            "rho": [[0.0]]
        }"#,
    );
    let nl = write_file(
        &dir,
        "nl.json",
        r#"{
            "schema_version": 1,
            "model": "nl",
            "form": "adjusted",
            "nests": [
                {"gamma": 0.5, "rho_shared": [1.0], "psi": [0.0, 0.1],
                 "x_lower": [[0.0], [0.0]], "x_upper": [[2.0], [2.0]]}
            ]
        }"#,
    );
    for path in [&mnl, &mc, &nl] {
        let (code, stdout, stderr) = run_cmd(&["dual", path.to_str().unwrap()]);
        assert_eq!(code, 0, "dual failed for {}: {stderr}", path.display());
        let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
        assert!(
            summary["strict_interior_margin"].as_f64().unwrap() > 0.0,
            "strict point must be interior for {}",
            path.display()
        );
        assert!(summary["strict_row_residual"].as_f64().unwrap() <= 1e-9);
    }
}

#[test]
fn solution_shape_mismatch_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let one = singleton_instance(&dir, 0.0, 2.0);
    let sol = dir.path().join("solution.json");
    let (code, _, _) = run_cmd(&[
        "solve",
        one.to_str().unwrap(),
        "--out",
        sol.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    // Verify against a two-product instance: shapes no longer line up.
    let two = write_file(
        &dir,
        "two.json",
        r#"{
            "schema_version": 1,
            "model": "mnl",
            "form": "adjusted",
            "phi": [[1.0], [1.0]],
            "psi": [0.0, 0.0],
            "x_lower": [[0.0], [0.0]],
            "x_upper": [[2.0], [2.0]]
        }"#,
    );
    let (code, _, _) = run_cmd(&["verify", two.to_str().unwrap(), sol.to_str().unwrap()]);
    assert_eq!(code, 4);
}
