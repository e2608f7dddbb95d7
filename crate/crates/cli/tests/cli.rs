use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn polyspec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyspec"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

const ANTI: &[&str] = &["--poly", "x1*x2+x2*x1", "--nvars", "2"];

fn args<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(tail).copied().collect()
}

#[test]
fn linearize_anticommutator_reference_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = polyspec(dir.path(), &args(&["linearize"], &args(ANTI, &["--verify", "50"])));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = stdout_json(&out);
    assert_eq!(json["dimension"], 3);
    let entry = |b: usize, i: usize, j: usize| json["coefficients"][b][i][j][0].as_f64().unwrap();
    let b0 = [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, -1.0, 0.0]];
    let b1 = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
    let b2 = [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
    for (b, want) in [b0, b1, b2].iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(entry(b, i, j), want[i][j], "b{b}[{i},{j}]");
            }
        }
    }
    assert_eq!(json["verified"], true);
    assert!(json["verification"]["max_corner_residual"].as_f64().unwrap() < 1e-10);
    assert_eq!(json["config"]["command"], "linearize");
}

#[test]
fn linearize_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = polyspec(
        dir.path(),
        &["linearize", "--poly", "x1*x2*x1 + x2*x3*x2 + x3*x1*x3", "--nvars", "3", "--out", "lin.json"],
    );
    assert!(out.status.success());
    let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("lin.json")).unwrap()).unwrap();
    assert_eq!(json["dimension"], 7);
}

#[test]
fn density_simulate_compare_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = polyspec(
        d,
        &args(&["density"], &args(ANTI, &["--var", "1=semicircle(0,1)", "--var", "2=semicircle(0,1)"])),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert!((summary["mass"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    let curve = fs::read_to_string(d.join("curve.csv")).unwrap();
    assert!(curve.starts_with("t,rho,raw_rho,iterations,residual\n"));
    assert_eq!(curve.lines().count(), 1001);

    let out = polyspec(
        d,
        &args(
            &["simulate"],
            &args(ANTI, &["--ensemble", "1=gue", "--ensemble", "2=gue", "--n", "300", "--reps", "2"]),
        ),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(d.join("eigs.csv")).unwrap().lines().count(), 601);

    let before = (fs::read(d.join("curve.csv")).unwrap(), fs::read(d.join("eigs.csv")).unwrap());
    let out = polyspec(
        d,
        &["compare", "--curve", "curve.csv", "--eigs", "eigs.csv", "--oracle", "--report", "report.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let after = (fs::read(d.join("curve.csv")).unwrap(), fs::read(d.join("eigs.csv")).unwrap());
    assert!(before == after, "compare modified its inputs");
    let report = stdout_json(&out);
    assert!(report["ks_distance"].as_f64().unwrap() < 0.05);
    let m4 = &report["moments"][3];
    assert_eq!(m4["oracle"].as_f64().unwrap(), 10.0);
    assert!((m4["pipeline"].as_f64().unwrap() - 10.0).abs() < 1e-2);
    let overlay = fs::read_to_string(d.join("overlay.dat")).unwrap();
    assert!(overlay.starts_with('#'));
    assert_eq!(overlay.lines().count(), 101);
    assert!(d.join("overlay.dat.json").exists() && d.join("report.json").exists());

    // every artifact can be rebuilt from its sidecar
    fs::rename(d.join("curve.csv"), d.join("first.csv")).unwrap();
    let out = polyspec(d, &["replay", "curve.csv.json"]);
    assert!(out.status.success());
    assert_eq!(fs::read(d.join("first.csv")).unwrap(), fs::read(d.join("curve.csv")).unwrap());
    let first_eigs = fs::read(d.join("eigs.csv")).unwrap();
    let out = polyspec(d, &["replay", "eigs.csv.json"]);
    assert!(out.status.success());
    assert_eq!(first_eigs, fs::read(d.join("eigs.csv")).unwrap());
}

#[test]
fn explicit_grid_and_free_poisson() {
    let dir = tempfile::tempdir().unwrap();
    let out = polyspec(
        dir.path(),
        &[
            "density", "--poly", "x1", "--nvars", "1", "--var", "1=mp(2,1)", "--grid", "-1:7:801", "--out", "mp.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert!((summary["mass"].as_f64().unwrap() - 1.0).abs() < 5e-3);
    let side: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("mp.csv.json")).unwrap()).unwrap();
    assert_eq!(side["config"]["grid"]["count"], 801);
    assert_eq!(side["config"]["vars"][0]["spec"], "mp(2,1)");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = polyspec(d, &["density", "--poly", "x1*x2+", "--nvars", "2", "--var", "1=sc(0,1)", "--var", "2=sc(0,1)"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("position"));

    let out = polyspec(d, &["density", "--poly", "x1", "--nvars", "1", "--var", "1=cauchy(0,1)"]);
    assert_eq!(out.status.code(), Some(2));

    let out = polyspec(d, &["linearize", "--poly", "-x1", "--nvars", "1"]);
    assert!(out.status.success(), "leading minus is polynomial text");
    let out = polyspec(d, &["linearize", "--poly", "i*x1*x2", "--nvars", "2"]);
    assert_eq!(out.status.code(), Some(2), "non-self-adjoint input");

    let out = polyspec(d, &["density", "--poly", "x1+x2", "--nvars", "2", "--var", "1=sc(0,1)"]);
    assert_eq!(out.status.code(), Some(1), "unbound variable");
    let out = polyspec(d, &["density", "--nvars", "1"]);
    assert_eq!(out.status.code(), Some(1), "missing flags");
    let out = polyspec(d, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let out = polyspec(d, &["--threads", "0", "compare", "--curve", "a", "--eigs", "b"]);
    assert_eq!(out.status.code(), Some(1));

    let out = polyspec(
        d,
        &args(
            &["density"],
            &args(ANTI, &["--var", "1=sc(0,1)", "--var", "2=sc(0,1)", "--grid", "-1:1:5", "--max-iter", "1"]),
        ),
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("curve.csv").exists(), "partial curve is still written");

    let out = polyspec(d, &["compare", "--curve", "missing.csv", "--eigs", "missing.csv"]);
    assert_eq!(out.status.code(), Some(4));
    let out = polyspec(
        d,
        &args(&["density"], &args(ANTI, &["--var", "1=sc(0,1)", "--var", "2=sc(0,1)", "--out", "no/such/dir/c.csv"])),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn help_documents_grammars_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = polyspec(dir.path(), &["density", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in [
        "semicircle(mean,var)",
        "mp(rate,scale)",
        "atoms((t1,w1),(t2,w2),...)",
        "table(path)",
        "wishart(ratio)",
        "expr    := term",
        "1 usage, 2 parse, 3 solver, 4 I/O",
    ] {
        assert!(text.contains(needle), "help lacks {needle}");
    }
}
