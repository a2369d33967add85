use std::path::Path;
use std::process::Command;

use randfrob_cli::run_command;

const TABLE_MEAN: [f64; 7] = [1.0, 1.14231, 1.28890, 1.49183, 1.85892, 2.62574, 4.34784];
const TABLE_VAR: [f64; 7] = [0.5, 0.520298, 0.597008, 0.790556, 1.27425, 2.60694, 6.94100];

fn run(args: &[&str]) -> i32 {
    run_command(std::iter::once("randfrob").chain(args.iter().copied()))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn stats_reproduces_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stats.csv");
    assert_eq!(
        run(&[
            "stats",
            "@hermite_forced",
            "--order",
            "20",
            "--grid",
            "0:1.5:0.25",
            "--out",
            path_str(&out)
        ]),
        0
    );
    let rows = rows(&out);
    assert_eq!(rows.len(), 7);
    for (i, row) in rows.iter().enumerate() {
        let mean: f64 = row[1].parse().unwrap();
        let var: f64 = row[2].parse().unwrap();
        assert!((mean - TABLE_MEAN[i]).abs() <= 5e-5, "mean row {i}: {mean}");
        assert!((var - TABLE_VAR[i]).abs() <= 5e-5, "variance row {i}: {var}");
    }
}

#[test]
fn spec_file_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("forced.spec");
    std::fs::write(&spec, randfrob::bundled::get("hermite_forced").unwrap()).unwrap();
    let out = dir.path().join("stats.csv");
    assert_eq!(
        run(&["stats", path_str(&spec), "--grid", "1.5", "--out", path_str(&out)]),
        0
    );
    assert_eq!(
        rows(&out),
        vec![vec!["1.5".to_string(), "4.34784".into(), "6.941".into()]]
    );
}

#[test]
fn check_reports_radius_one_for_beta_series() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    assert_eq!(run(&["check", "@beta_series", "--json", path_str(&json)]), 0);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["verdict"], "pass");
    let r = report["radius_estimate"].as_f64().unwrap();
    assert!((r - 1.0).abs() < 1e-9, "{r}");
}

#[test]
fn every_bundled_spec_passes_check() {
    for (name, _) in randfrob::bundled::SPECS {
        assert_eq!(run(&["check", &format!("@{name}")]), 0, "{name}");
    }
}

#[test]
fn check_fails_on_unbounded_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("gamma.spec");
    std::fs::write(
        &spec,
        r#"{
            "problem": {},
            "symbols": [{"name": "G", "dist": {"kind": "gamma", "shape": 2, "rate": 1}}],
            "series": {"B": [{"n": 0, "value": "G"}]},
            "initial": {"Y0": 1, "Y1": 0}
        }"#,
    )
    .unwrap();
    assert_eq!(run(&["check", path_str(&spec)]), 1);
}

#[test]
fn solve_airy_has_zero_second_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("coeffs.csv");
    assert_eq!(run(&["solve", "@airy", "--order", "5", "--out", path_str(&out)]), 0);
    let rows = rows(&out);
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[2], vec!["2".to_string(), "0".into()]);
    assert_eq!(rows[3], vec!["3".to_string(), "-1/6*A*Y0".into()]);
}

#[test]
fn majorant_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    assert_eq!(
        run(&[
            "majorant",
            "@hermite_forced",
            "--s",
            "1.6",
            "--order",
            "10",
            "--out",
            path_str(&out)
        ]),
        0
    );
    let rows = rows(&out);
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0][0], "0");
    // s must lie inside the radius
    assert_eq!(run(&["majorant", "@beta_series", "--s", "1.5"]), 2);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["stats", "@hermite_forced", "--grid", "0:1:0.5", "--bogus"]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["check", "/nonexistent/x.spec"]), 2);
    assert_eq!(run(&["check", "@nope"]), 2);
    assert_eq!(run(&["stats", "@airy", "--grid", "1:0:0.5"]), 2);
    assert_eq!(run(&["mc", "@airy", "--grid", "0:1:0.5", "--samples", "0"]), 2);
}

#[test]
fn malformed_spec_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.spec");
    std::fs::write(
        &spec,
        r#"{
            "problem": {},
            "symbols": [{"name": "A", "dist": {"kind": "bernoulli", "q": 0.5}}],
            "initial": {"Y0": "A", "Y1": 0}
        }"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_randfrob"))
        .args(["check", path_str(&spec)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("symbols[0].dist.q"), "{err}");
}

#[test]
fn compare_flags_disagreement() {
    let dir = tempfile::tempdir().unwrap();
    let exact = dir.path().join("exact.csv");
    let mc = dir.path().join("mc.csv");
    assert_eq!(
        run(&[
            "stats",
            "@hermite_forced",
            "--grid",
            "0:1.5:0.25",
            "--out",
            path_str(&exact)
        ]),
        0
    );
    assert_eq!(
        run(&[
            "mc",
            "@hermite_forced",
            "--samples",
            "20000",
            "--seed",
            "3",
            "--grid",
            "0:1.5:0.25",
            "--out",
            path_str(&mc)
        ]),
        0
    );
    assert_eq!(run(&["compare", path_str(&mc), path_str(&exact)]), 0);
    // N=2 is far from the converged curve at t=1.5
    let crude = dir.path().join("crude.csv");
    assert_eq!(
        run(&[
            "stats",
            "@hermite_forced",
            "--order",
            "2",
            "--grid",
            "0:1.5:0.25",
            "--out",
            path_str(&crude)
        ]),
        0
    );
    assert_eq!(run(&["compare", path_str(&mc), path_str(&crude)]), 1);
}

fn binary_output(args: &[&str], threads: &str) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_randfrob"))
        .args(args)
        .env("RANDFROB_THREADS", threads)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

#[test]
fn output_is_byte_identical_across_runs_and_thread_counts() {
    for args in [
        &["stats", "@hermite_forced", "--grid", "0:1.5:0.25", "--full-precision"][..],
        &[
            "mc",
            "@hermite_forced",
            "--samples",
            "5000",
            "--seed",
            "11",
            "--grid",
            "0:1.5:0.25",
        ][..],
        &[
            "mc",
            "@polynomial_data",
            "--method",
            "rk4",
            "--step",
            "0.01",
            "--samples",
            "3000",
            "--grid",
            "0:1:0.5",
            "--full-precision",
        ][..],
    ] {
        let one = binary_output(args, "1");
        assert_eq!(one, binary_output(args, "1"), "{args:?}");
        assert_eq!(one, binary_output(args, "4"), "{args:?}");
    }
}

#[test]
fn bundled_specs_listing() {
    let out = binary_output(&["specs"], "1");
    let text = String::from_utf8(out).unwrap();
    assert!(text.lines().any(|l| l == "hermite_forced"));
}
