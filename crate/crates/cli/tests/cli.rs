use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use phaselab_cli::{parse_config, CliError, EXIT_ERROR, EXIT_PASS, EXIT_TOLERANCE};
use serde_json::Value;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn phaselab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_phaselab")).args(args).env("RUST_LOG", "error").output().expect("spawn phaselab")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.json");
    fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_HARMONIC: &str = r#"{
  "version": "1",
  "factors": [{"label": "Q", "kind": "grid", "n": 32, "half_width": 7.0, "covariance": [[0.5]]}],
  "hamiltonian": {"terms": [
    {"powers_q": [2], "powers_p": [0], "coeff": 0.5},
    {"powers_q": [0], "powers_p": [2], "coeff": 0.5}
  ]},
  "initial_state": {"kind": "displaced", "a": 1.0},
  "run": {"dt": 0.001, "t_end": 1.5707963267948966, "stride": 250, "truncation": 1}
}"#;

#[test]
fn shipped_configs_parse() {
    let mut seen = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(&path).unwrap();
            parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

#[test]
fn harmonic_compare_stays_within_oracle_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_HARMONIC);
    let out = dir.path().join("out");
    let run = phaselab(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(EXIT_PASS), "{}", String::from_utf8_lossy(&run.stderr));
    let report = read_json(&out.join("compare.json"));
    let err = report["max_abs"].as_f64().unwrap();
    assert!(err <= 1e-4, "max_abs = {err}");
    assert_eq!(report["pass"], Value::Bool(true));
}

#[test]
fn no_feedback_config_is_classified_no_feedback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("no_feedback.json");
    let text = fs::read_to_string(&cfg).unwrap().replace("\"t_end\": 5.0", "\"t_end\": 0.5");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let run = phaselab(&["feedback", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(EXIT_PASS), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(read_json(&out.join("verdict.json"))["class"], "no_feedback");
}

#[test]
fn feedback_config_is_classified_feedback() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        fs::read_to_string(configs_dir().join("feedback.json")).unwrap().replace("\"t_end\": 5.0", "\"t_end\": 0.5");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let run = phaselab(&["feedback", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(EXIT_PASS), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(read_json(&out.join("verdict.json"))["class"], "feedback");
}

#[test]
fn verify_without_config_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let run = phaselab(&["verify", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(EXIT_PASS), "{}", String::from_utf8_lossy(&run.stderr));
    let report = read_json(&out.join("verify.json"));
    assert_eq!(report["failed"], 0);
    assert!(report["passed"].as_u64().unwrap() > 20);
    assert!(fs::read_to_string(out.join("verify.csv"))
        .unwrap()
        .starts_with("invariant,size,residual,tolerance,bound,pass"));
}

#[test]
fn tolerance_violation_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_HARMONIC
        .replace("\"t_end\": 1.5707963267948966", "\"t_end\": 0.1")
        .replace("\"run\"", "\"tolerances\": {\"oracle\": 1e-300},\n  \"run\"");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let run = phaselab(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(EXIT_TOLERANCE));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["status"], "tolerance_violation");
    assert!(!manifest["violations"].as_array().unwrap().is_empty());
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"version": "1", "factors": [{"label": "Q", "kind": "grid", "n": 32, "half_width": 6.0, "covariance": [[1.0, 0.2], [0.0, 1.0]]}]}"#,
    );
    let run =
        phaselab(&["transform", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(EXIT_ERROR));
    assert!(String::from_utf8_lossy(&run.stderr).contains("factors[0].covariance"));
}

#[test]
fn missing_config_is_a_usage_error() {
    let run = phaselab(&["evolve"]);
    assert_eq!(run.status.code(), Some(EXIT_ERROR));
}

#[test]
fn unknown_version_is_rejected_before_schema() {
    let err = parse_config(r#"{"version": "9", "factors": 3}"#).unwrap_err();
    assert!(matches!(err, CliError::UnknownVersion(_)));
}

#[test]
fn reruns_are_byte_identical_and_manifest_hashes_match() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_HARMONIC
        .replace("\"t_end\": 1.5707963267948966", "\"t_end\": 0.25")
        .replace("\"stride\": 250", "\"stride\": 50");
    let cfg = write_config(dir.path(), &text);
    let outs: Vec<PathBuf> = ["a", "b"].iter().map(|s| dir.path().join(s)).collect();
    for out in &outs {
        let run = phaselab(&["evolve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(run.status.code(), Some(EXIT_PASS), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let manifest = read_json(&outs[0].join("manifest.json"));
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "diagnostics.csv"));
    for f in files {
        let rel = f["path"].as_str().unwrap();
        let a = fs::read(outs[0].join(rel)).unwrap();
        assert_eq!(a, fs::read(outs[1].join(rel)).unwrap(), "{rel} differs between runs");
        let digest: String = sha2_hex(&a);
        assert_eq!(f["sha256"].as_str().unwrap(), digest, "{rel} hash");
    }
    assert_eq!(fs::read(outs[0].join("manifest.json")).unwrap(), fs::read(outs[1].join("manifest.json")).unwrap());
}

fn sha2_hex(bytes: &[u8]) -> String {
    use sha2::Digest;
    sha2::Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
