use gausscomp::cli::{run_from, EXIT_FAILED_CHECK, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION};
use serde_json::Value;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("gausscomp").chain(args.iter().copied());
    let code = run_from(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

#[test]
fn estimate_prints_json_with_metadata() {
    let (code, out, err) = run(&["estimate", "--t", "0.5", "--samples", "2000", "--seed", "7"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["metadata"]["seed"], 7);
    assert_eq!(v["metadata"]["generator"], "chacha8-stream/box-muller");
    assert_eq!(v["config"]["variant"], "spherical");
    assert!(v["estimate"]["mean"].as_f64().unwrap() > 1.5);
}

#[test]
fn lifted_estimate_includes_adjusted_value() {
    let (code, out, _) = run(&[
        "estimate",
        "--variant",
        "lifted",
        "--t",
        "0.5",
        "--samples",
        "2000",
    ]);
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["adjusted_value"].is_f64());
}

#[test]
fn curve_writes_csv_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let (code, out, err) = run(&[
        "curve",
        "--t-grid",
        "0:0.3:0.1",
        "--samples",
        "500",
        "--sign",
        "-1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.is_empty());
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# generator: chacha8-stream/box-muller\n# seed: 1\n"));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0].split(',').count(), 9);
    assert_eq!(body.len(), 5);
    assert!(body[4].starts_with("0.3,"));
}

#[test]
fn custom_set_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.txt");
    std::fs::write(&path, "# three directions in the plane\n1 0 0.6\n0 1 0.8\n").unwrap();
    let (code, out, err) = run(&[
        "verify-identities",
        "--set",
        path.to_str().unwrap(),
        "--samples",
        "3000",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["config"]["variant"], "spherical");
}

#[test]
fn limits_defaults_follow_the_sign() {
    let (code, out, _) = run(&[
        "limits",
        "--set",
        "x_minus",
        "--sign",
        "-1",
        "--samples",
        "3000",
    ]);
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    let names: Vec<&str> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["gordon", "lifted-gordon"]);
    let (code, out, _) = run(&["limits", "--samples", "3000"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("\"chain\""));
}

#[test]
fn validation_errors_exit_with_two() {
    assert_eq!(run(&["estimate", "--t", "1.5"]).0, EXIT_VALIDATION);
    assert_eq!(
        run(&[
            "estimate",
            "--t",
            "0",
            "--quantity",
            "dpsi",
            "--route",
            "standard"
        ])
        .0,
        EXIT_VALIDATION
    );
    assert_eq!(
        run(&[
            "estimate",
            "--t",
            "0.5",
            "--set",
            "x_minus",
            "--variant",
            "spherical"
        ])
        .0,
        EXIT_VALIDATION
    );
    assert_eq!(
        run(&["estimate", "--t", "0.5", "--beta", "-1"]).0,
        EXIT_VALIDATION
    );
    assert_eq!(run(&["curve", "--t-grid", "0:1:0.5"]).0, EXIT_VALIDATION);
    assert_eq!(run(&["curve", "--t-grid", "nonsense"]).0, EXIT_VALIDATION);
    assert_eq!(run(&["reproduce", "table42"]).0, EXIT_VALIDATION);
    assert_eq!(
        run(&["limits", "--set", "x_minus", "--check", "chain"]).0,
        EXIT_VALIDATION
    );
    assert_eq!(run(&["export-fixture", "x_other"]).0, EXIT_VALIDATION);
    assert_eq!(run(&["no-such-command"]).0, EXIT_VALIDATION);
    assert_eq!(
        run(&["estimate", "--set", "/nonexistent/set.txt", "--t", "0.5"]).0,
        EXIT_VALIDATION
    );
    assert_eq!(
        run(&["--threads", "0", "estimate", "--t", "0.5"]).0,
        EXIT_VALIDATION
    );
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let (code, _, err) = run(&[
        "export-fixture",
        "x_plus",
        "--out",
        "/nonexistent/dir/x.txt",
    ]);
    assert_eq!(code, EXIT_RUNTIME, "{err}");
}

#[test]
fn failed_reproduction_exits_with_one() {
    // Far too few replications to meet the tolerances.
    let (code, out, _) = run(&[
        "reproduce",
        "table5-beta10",
        "--samples",
        "20",
        "--seed",
        "3",
    ]);
    assert_eq!(code, EXIT_FAILED_CHECK);
    assert!(out.contains("FAIL"));
}

#[test]
fn reproduce_table_passes_and_renders() {
    let (code, out, _) = run(&["reproduce", "table1"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("cells: 45 of 45 pass"));
    let (code, out, _) = run(&[
        "reproduce",
        "table1",
        "--format",
        "json",
        "--samples",
        "1000",
    ]);
    assert!(code == EXIT_OK || code == EXIT_FAILED_CHECK);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["samples"], 1000);
}

#[test]
fn export_fixture_round_trips_through_set_option() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("xm.txt");
    let (code, _, _) = run(&["export-fixture", "x_minus", "--out", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let a = run(&[
        "estimate",
        "--set",
        "x_minus",
        "--t",
        "0.3",
        "--samples",
        "500",
    ])
    .1;
    let b = run(&[
        "estimate",
        "--set",
        path.to_str().unwrap(),
        "--t",
        "0.3",
        "--samples",
        "500",
    ])
    .1;
    let (a, b): (Value, Value) = (
        serde_json::from_str(&a).unwrap(),
        serde_json::from_str(&b).unwrap(),
    );
    assert_eq!(a["estimate"], b["estimate"]);
}

#[test]
fn help_exits_cleanly() {
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("reproduce"));
}
