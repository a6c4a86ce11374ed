//! End-to-end runs of the `whitney` binary against the shipped fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn whitney(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_whitney"))
        .args(args)
        .env_remove("WS_SEED")
        .output()
        .expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn refine_stable_bundle_exits_zero() {
    // A bundle whose fibers are already stable under refinement.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stable.json");
    let doc = serde_json::json!({
        "meta": {"m": 1, "n": 1, "d": 1, "delta": 0.25, "seed": 1, "tol": 1e-6},
        "kind": "sampled-bundle",
        "points": [[0.1], [0.2], [0.3], [0.4]],
        "fibers": [{"full": true}, {"full": true}, {"full": true}, {"full": true}],
    });
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let out = whitney(&["refine", "--input", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stdout: {}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("\"iterations\": 1") || text.contains("iterations\":1"), "{text}");
}

#[test]
fn refine_oscillating_fixture_exits_two_and_lists_origin() {
    let input = fixtures().join("bundle_oscillating.json");
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = whitney(&[
        "refine",
        "--input",
        input.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let emptied = body["report"]["stages"][1]["details"]["emptied_points"]
        .as_array()
        .unwrap();
    assert!(
        emptied.iter().any(|v| v.as_u64() == Some(0)),
        "origin must be listed: {emptied:?}"
    );
}

#[test]
fn eliminate_diag_system_passes() {
    let input = fixtures().join("system_diag.json");
    let out = whitney(&["eliminate", "--input", input.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn helly_circle_family_passes() {
    let input = fixtures().join("family_circle.json");
    let out = whitney(&[
        "helly",
        "--input",
        input.to_str().unwrap(),
        "--sphere-samples",
        "4000",
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn patch_compatible_and_incompatible() {
    let plus = fixtures().join("field_plus_y3.json");
    let minus = fixtures().join("field_zero.json");
    let region = fixtures().join("region_x_squared.json");
    let out = whitney(&[
        "patch",
        "--plus",
        plus.to_str().unwrap(),
        "--minus",
        minus.to_str().unwrap(),
        "--region",
        region.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));

    let bad = fixtures().join("field_plus_y2_incompatible.json");
    let out2 = whitney(&[
        "patch",
        "--plus",
        bad.to_str().unwrap(),
        "--minus",
        minus.to_str().unwrap(),
        "--region",
        region.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out2), 2);
}

#[test]
fn synthesize_xy_fixture_passes_and_writes_fits() {
    let input = fixtures().join("wedge_xy.json");
    let dir = tempfile::tempdir().unwrap();
    let outpath = dir.path().join("fits.json");
    let out = whitney(&[
        "synthesize",
        "--input",
        input.to_str().unwrap(),
        "--out",
        outpath.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&outpath).unwrap()).unwrap();
    assert_eq!(doc["certified"], serde_json::json!(true));
}

#[test]
fn check_candidate_against_bundle_and_normal_form() {
    let field = fixtures().join("field_xy.json");
    let wedge = fixtures().join("wedge_xy.json");
    let out = whitney(&[
        "check",
        "--bundle",
        wedge.to_str().unwrap(),
        "--field",
        field.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn usage_errors_exit_one() {
    let out = whitney(&["refine"]); // missing --input
    assert_eq!(exit_code(&out), 1);
    let out2 = whitney(&["refine", "--input", "/nonexistent/x.json"]);
    assert_eq!(exit_code(&out2), 1);
}

#[test]
fn schema_violations_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.json");
    let doc = serde_json::json!({
        "meta": {"m": 1, "n": 1, "d": 1, "delta": 0.25, "seed": 1, "tol": 1e-6},
        "kind": "sampled-bundle",
        "points": [[0.1], [0.1]],
        "fibers": [{"full": true}, {"full": true}],
    });
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let out = whitney(&["refine", "--input", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("duplicate point"), "{err}");
}

#[test]
fn reports_are_deterministic_modulo_wall_time() {
    let input = fixtures().join("family_circle.json");
    let dir = tempfile::tempdir().unwrap();
    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");
    for r in [&r1, &r2] {
        let out = whitney(&[
            "helly",
            "--input",
            input.to_str().unwrap(),
            "--sphere-samples",
            "2000",
            "--report",
            r.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0);
    }
    let mut a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&r1).unwrap()).unwrap();
    let mut b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&r2).unwrap()).unwrap();
    a["wall_ms"] = serde_json::json!(0);
    b["wall_ms"] = serde_json::json!(0);
    assert_eq!(a, b, "report bodies must be byte-identical modulo timing");
}

#[test]
fn ws_seed_overrides_fixture_seed() {
    let input = fixtures().join("family_circle.json");
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = Command::new(env!("CARGO_BIN_EXE_whitney"))
        .args([
            "helly",
            "--input",
            input.to_str().unwrap(),
            "--sphere-samples",
            "1000",
            "--report",
            report.to_str().unwrap(),
        ])
        .env("WS_SEED", "424242")
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(body["report"]["seed"], serde_json::json!(424242));
}

#[test]
fn kollar_nowak_fixture_parses_and_round_trips() {
    use whitney_cli::fixture::FixtureSpec;
    // parse → canonical emit → parse → emit must be byte-identical
    let path = fixtures().join("bundle_kollar_nowak.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let spec = FixtureSpec::parse(&text).unwrap();
    let emitted = spec.emit();
    let spec2 = FixtureSpec::parse(&emitted).unwrap();
    assert_eq!(spec, spec2);
    assert_eq!(emitted, spec2.emit(), "canonical emit must be idempotent");
}

#[test]
fn all_shipped_fixtures_parse_and_round_trip() {
    use whitney_cli::fixture::FixtureSpec;
    for entry in std::fs::read_dir(fixtures()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let spec = FixtureSpec::parse(&text)
            .unwrap_or_else(|e| panic!("{} fails to parse: {e:#}", path.display()));
        let emitted = spec.emit();
        let spec2 = FixtureSpec::parse(&emitted).unwrap();
        assert_eq!(spec, spec2, "{}", path.display());
        assert_eq!(emitted, spec2.emit(), "{}", path.display());
    }
}
