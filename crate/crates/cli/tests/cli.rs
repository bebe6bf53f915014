use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_haar-factor"));
    cmd.env_remove("HAAR_FACTOR_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stdout));
    })
}

/// Scratch directory unique to one test.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("haar-factor-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn norms_of_the_first_haar_function_and_the_zero_vector() {
    let dir = scratch("norms");
    let h = write(&dir, "h.json", r#"{"coeffs": [{"n": 0, "k": 0, "value": "1"}]}"#);
    let out = run(&["norms", &h]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["sl_inf_norm_sq"], "1");
    assert!((report["h1_norm"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let zero = write(&dir, "zero.json", r#"{"coeffs": []}"#);
    let report = json(&run(&["norms", &zero]));
    assert_eq!(report["sl_inf_norm_sq"], "0");
    assert_eq!(report["h1_norm"]["value"].as_f64(), Some(0.0));

    let three = write(&dir, "three.json", r#"{"coeffs": [{"n": 0, "k": 0, "value": "1"}, {"n": 1, "k": 0, "value": "1/2"}, {"n": 2, "k": 3, "value": "-3"}]}"#);
    let report = json(&run(&["norms", &three]));
    assert_eq!(report["sl_inf_norm_sq"], "10");
    assert_eq!(report["leaf_profile"]["max"], "10");

    let bad = write(&dir, "bad.json", "{");
    assert_eq!(code(&run(&["norms", &bad])), 2);
    assert_eq!(code(&run(&["norms", "/nonexistent/file.json"])), 2);
}

#[test]
fn check_jones_exit_codes() {
    let dir = scratch("jones");
    let identity = write(
        &dir,
        "identity.json",
        r#"{"indices": [{"n":0,"k":0},{"n":1,"k":0},{"n":1,"k":1}],
            "blocks": {"0": [{"n":0,"k":0}], "1": [{"n":1,"k":0}], "2": [{"n":1,"k":1}]}}"#,
    );
    let out = run(&["check-jones", &identity]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["kappa"], "1");

    // The child's block sticks out of its parent's union.
    let broken = write(
        &dir,
        "broken.json",
        r#"{"indices": [{"n":0,"k":0},{"n":1,"k":0},{"n":1,"k":1}],
            "blocks": {"0": [{"n":1,"k":0}], "1": [{"n":2,"k":0}], "2": [{"n":2,"k":2}]}}"#,
    );
    let out = run(&["check-jones", &broken]);
    assert_eq!(code(&out), 1);
    let violations = json(&out)["violations"].as_array().unwrap().clone();
    assert!(!violations.is_empty());
    assert!(violations.iter().any(|v| !v["indices"].as_array().unwrap().is_empty()));
}

#[test]
fn reiterate_stays_within_the_product() {
    let dir = scratch("reiterate");
    let inner = write(
        &dir,
        "inner.json",
        r#"{"indices": [{"n":0,"k":0},{"n":1,"k":0},{"n":1,"k":1}],
            "blocks": {"0": [{"n":1,"k":0},{"n":1,"k":1}], "1": [{"n":2,"k":0},{"n":2,"k":2}], "2": [{"n":2,"k":1},{"n":2,"k":3}]}}"#,
    );
    let selector = write(
        &dir,
        "selector.json",
        r#"{"indices": [{"n":0,"k":0}], "blocks": {"0": [{"n":1,"k":0},{"n":1,"k":1}]}}"#,
    );
    let out = run(&["reiterate", "--inner", &inner, "--selector", &selector]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["report"]["satisfied"], true);
    let composed = write(&dir, "composed.json", &report["reiteration"]["family"].to_string());
    assert_eq!(code(&run(&["check-jones", &composed])), 0);
}

#[test]
fn build_gg_and_its_preconditions() {
    let dir = scratch("gg");
    let blocks = write(&dir, "blocks.json", r#"[{"n":1,"k":0},{"n":1,"k":1}]"#);
    let out = run(&["build-gg", "--blocks", &blocks, "--side", "right", "--m", "3"]);
    assert_eq!(code(&out), 0);
    let cover = json(&out)["cover"].as_array().unwrap().clone();
    assert_eq!(cover.len(), 4);
    assert!(cover.iter().all(|i| i["n"] == 3));
    assert_eq!(code(&run(&["build-gg", "--blocks", &blocks, "--side", "right", "--m", "1"])), 2);
}

#[test]
fn factor_identity_and_replay() {
    let dir = scratch("factor");
    let op = dir.join("id.json");
    let out = run(&["generate", "--kind", "identity", "--depth", "6", "-o", op.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let cert = dir.join("cert.json");
    let out = run(&[
        "factor", "--operator", op.to_str().unwrap(), "--delta", "1", "--eta", "1", "--index-depth", "2",
        "--emit-matrices", "-o", cert.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stored: Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    assert_eq!(stored["verified"], true);
    assert_eq!(stored["body"]["kind"], "factorization");
    assert_eq!(stored["body"]["payload"]["residual"], "0");
    assert!(!stored["body"]["payload"]["r"].is_null());

    let out = run(&["verify", "--operator", op.to_str().unwrap(), "--certificate", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["reproduced"], true);

    // A certificate replayed against another operator fails.
    let other = dir.join("other.json");
    run(&["generate", "--kind", "scaled-diagonal", "--delta", "2", "--depth", "6", "-o", other.to_str().unwrap()]);
    let out = run(&["verify", "--operator", other.to_str().unwrap(), "--certificate", cert.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn random_large_diagonal_spec_stays_within_bounds() {
    let dir = scratch("spec");
    let spec = write(
        &dir,
        "spec.json",
        r#"{"kind": "random_large_diagonal", "depth": 10, "delta": "1/2", "off_diagonal_mass": "1/10000", "seed": 5}"#,
    );
    let out = run(&["factor", "--spec", &spec, "--delta", "1/2", "--eta", "1", "--index-depth", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let payload = json(&out)["body"]["payload"].clone();
    assert!(payload["r"].is_null(), "matrices only with --emit-matrices");
    let bound: Vec<f64> = payload["norm_product_bound"]
        .as_str()
        .unwrap()
        .split('/')
        .map(|x| x.parse().unwrap())
        .collect();
    assert!(bound[0] / bound.get(1).copied().unwrap_or(1.0) <= 4.0);
}

#[test]
fn infeasible_depth_exits_3_with_a_report() {
    let out = {
        let dir = scratch("infeasible");
        let op = dir.join("small.json");
        run(&["generate", "--kind", "identity", "--depth", "3", "-o", op.to_str().unwrap()]);
        run(&["factor", "--operator", op.to_str().unwrap(), "--delta", "1", "--eta", "1", "--index-depth", "3"])
    };
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("depth"), "{stderr}");
}

#[test]
fn primary_trivial_choices() {
    let dir = scratch("primary");
    let zero = write(&dir, "zero.json", r#"{"depth": 6, "norm_bound": "0", "entries": []}"#);
    let out = run(&["primary", "--operator", &zero, "--eta", "1", "--index-depth", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["body"]["payload"]["choice"], "Id_minus_T");

    let id = dir.join("id.json");
    run(&["generate", "--kind", "identity", "--depth", "6", "-o", id.to_str().unwrap()]);
    let out = run(&["primary", "--operator", id.to_str().unwrap(), "--eta", "1", "--index-depth", "1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["body"]["payload"]["choice"], "T");
}

#[test]
fn projection_mask_choice_is_deterministic() {
    let dir = scratch("mask");
    let op = dir.join("mask.json");
    run(&["generate", "--kind", "projection-mask", "--depth", "8", "--seed", "3", "-o", op.to_str().unwrap()]);
    let args = ["primary", "--operator", op.to_str().unwrap(), "--eta", "1", "--index-depth", "1"];
    let (first, second) = (run(&args), run(&args));
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, second.stdout);
    let cert = write(&dir, "cert.json", &String::from_utf8(first.stdout).unwrap());
    let out = run(&["verify", "--operator", op.to_str().unwrap(), "--certificate", &cert]);
    assert_eq!(code(&out), 0);
}

#[test]
fn generate_is_deterministic_and_thread_count_is_irrelevant() {
    let args = ["generate", "--kind", "random-large-diagonal", "--depth", "7", "--delta", "1/2", "--mass", "1/100", "--seed", "9"];
    let a = run(&args);
    let b = bin().args(args).env("HAAR_FACTOR_THREADS", "1").output().unwrap();
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["depth"], 7);
}

#[test]
fn diagonalize_writes_a_sealed_certificate() {
    let dir = scratch("diag");
    let op = dir.join("op.json");
    run(&["generate", "--kind", "haar-multiplier", "--depth", "8", "--delta", "1/2", "--seed", "2", "-o", op.to_str().unwrap()]);
    let out = run(&["diagonalize", "--operator", op.to_str().unwrap(), "--delta", "1/2", "--eta", "1", "--index-depth", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cert = json(&out);
    assert_eq!(cert["body"]["kind"], "diagonalization");
    assert_eq!(cert["body"]["payload"]["certificate"]["kappa"], "1");
    let family = write(&dir, "family.json", &cert["body"]["payload"]["basis"]["family"].to_string());
    let out = run(&["figure", "--family", &family]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("<text").count(), 3);
}

#[test]
fn figure_matches_the_golden_svg() {
    let out = run(&["figure", "--family", &fixture("gg_family.json")]);
    assert_eq!(code(&out), 0);
    let golden = std::fs::read_to_string(fixture("gg_cover.svg")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
}

#[test]
fn figure_single_row_and_empty_request() {
    let dir = scratch("figure");
    let single = write(&dir, "single.json", r#"{"indices": [{"n":0,"k":0}], "blocks": {"0": [{"n":0,"k":0}]}}"#);
    let out = run(&["figure", "--family", &single]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("<text").count(), 1);
    let empty = write(&dir, "empty.json", "[]");
    assert_eq!(code(&run(&["figure", "--blocks", &empty, "--side", "left", "--m", "3"])), 2);
    assert_eq!(code(&run(&["figure"])), 2);
}
