//! End-to-end tests of the binary: exit codes, artifact formats,
//! determinism across runs and thread counts.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_kgpoint")
}

fn tmp(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("kgpoint-cli-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

/// Small but nontrivial scenario: two sites, short horizon, all artifact
/// kinds enabled.
fn small_scenario(with_outputs: bool) -> String {
    let outputs = if with_outputs {
        r#"{
    "charges": "charges.csv",
    "residuals": "residuals.csv",
    "energy": { "path": "energy.csv", "times": [0.0, 0.4], "half_width": 6.0, "resolution": 12 },
    "snapshots": {
      "times": [0.4],
      "grid": { "half_width": 2.0, "resolution": 4 },
      "prefix": "snap",
      "binary": false
    }
  }"#
    } else {
        "{}"
    };
    format!(
        r#"{{
  "system": {{ "mass": 1.0, "points": [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]] }},
  "potential": {{
    "family": {{ "power_law": [{{ "gamma": 1.0, "sigma": 1.0 }}, {{ "gamma": 1.0, "sigma": 1.0 }}] }},
    "a": 1.06,
    "b": 1.0
  }},
  "initial": {{
    "zeta0": [[0.17109914015610828, 0.0], [0.17109914015610828, 0.0]],
    "zeta0_dot": [[0.2, 0.0], [0.0, 0.1]]
  }},
  "run": {{ "horizon": 0.4, "dt": 0.002 }},
  "outputs": {outputs}
}}"#
    )
}

#[test]
fn successful_run_writes_all_artifacts() {
    let dir = tmp("artifacts");
    let scenario = write_scenario(&dir, "s.json", &small_scenario(true));
    let out = dir.join("out");
    let status = Command::new(bin())
        .args(["--scenario"])
        .arg(&scenario)
        .args(["--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for f in ["charges.csv", "residuals.csv", "energy.csv", "snap_0.4.dat", "manifest.json"] {
        assert!(out.join(f).exists(), "missing artifact {f}");
    }
    let charges = std::fs::read_to_string(out.join("charges.csv")).unwrap();
    let header = charges.lines().next().unwrap();
    assert_eq!(
        header,
        "t,re_zeta_1,im_zeta_1,re_zeta_2,im_zeta_2,re_zdot_1,im_zdot_1,re_zdot_2,im_zdot_2,residual_1_abs,residual_2_abs"
    );
    let energy = std::fs::read_to_string(out.join("energy.csv")).unwrap();
    assert_eq!(
        energy.lines().next().unwrap(),
        "t,kinetic,gradient,mass_term,potential,total,est_error"
    );
    let snap = std::fs::read_to_string(out.join("snap_0.4.dat")).unwrap();
    assert!(snap.starts_with("kgpoint snapshot\n"));
    assert!(snap.contains("end_header"));
    let rows = snap.split("end_header\n").nth(1).unwrap();
    assert_eq!(rows.lines().count(), 64);
    assert_eq!(rows.lines().next().unwrap().split(' ').count(), 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["resolved"]["sites"], 2);
    assert_eq!(manifest["checks"]["apriori"]["pass"], true);
    assert_eq!(
        manifest["scenario_hash"].as_str().unwrap().len(),
        40,
        "git-style hash expected"
    );
}

#[test]
fn malformed_scenario_exits_with_validation_code() {
    let dir = tmp("malformed");
    let scenario = write_scenario(&dir, "bad.json", "{ \"system\": { \"mass\": 1.0,\n  BROKEN");
    let out = Command::new(bin())
        .args(["--scenario"])
        .arg(&scenario)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    // Line-referenced message.
    assert!(msg.contains("bad.json:2:"), "got: {msg}");
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tmp("unknown-field");
    let body = small_scenario(false).replace("\"run\":", "\"typo_field\": 1, \"run\":");
    let scenario = write_scenario(&dir, "s.json", &body);
    let out = Command::new(bin())
        .args(["--scenario"])
        .arg(&scenario)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo_field"));
}

#[test]
fn invalid_coercivity_constants_are_rejected() {
    let dir = tmp("coercivity");
    // a = 0 with the quartic potential: U - G dips to -1/2 below b|z|^2 - a.
    let body = small_scenario(false).replace("\"a\": 1.06", "\"a\": 0.0");
    let scenario = write_scenario(&dir, "s.json", &body);
    let out = Command::new(bin())
        .args(["--scenario"])
        .arg(&scenario)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coercivity"));
}

#[test]
fn outputs_are_bit_identical_across_runs_and_thread_counts() {
    let dir = tmp("determinism");
    let scenario = write_scenario(&dir, "s.json", &small_scenario(true));
    let mut digests = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out = dir.join(tag);
        let status = Command::new(bin())
            .args(["--scenario"])
            .arg(&scenario)
            .args(["--out"])
            .arg(&out)
            .args(["--threads", threads])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        let mut bundle = Vec::new();
        for f in ["charges.csv", "residuals.csv", "energy.csv", "snap_0.4.dat"] {
            bundle.extend(std::fs::read(out.join(f)).unwrap());
        }
        digests.push(bundle);
    }
    assert_eq!(digests[0], digests[1], "re-run differs");
    assert_eq!(digests[0], digests[2], "thread count changed results");
}

#[test]
fn binary_snapshots_round_trip() {
    let dir = tmp("binary-snap");
    let body = small_scenario(true).replace("\"binary\": false", "\"binary\": true");
    let scenario = write_scenario(&dir, "s.json", &body);
    let out = dir.join("out");
    let status = Command::new(bin())
        .args(["--scenario"])
        .arg(&scenario)
        .args(["--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let bytes = std::fs::read(out.join("snap_0.4.dat")).unwrap();
    let marker = b"end_header\n";
    let pos = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .unwrap()
        + marker.len();
    let payload = &bytes[pos..];
    assert_eq!(payload.len(), 64 * 5 * 8, "4^3 points x 5 little-endian f64");
    // First point of the 4^3 grid: cell-centered at (-1.5, -1.5, -1.5).
    let x = f64::from_le_bytes(payload[0..8].try_into().unwrap());
    let y = f64::from_le_bytes(payload[8..16].try_into().unwrap());
    assert_eq!(x, -1.5);
    assert_eq!(y, -1.5);
}

#[test]
fn oracle_flag_gates_on_the_comparison() {
    let dir = tmp("oracle-flag");
    // Short horizon keeps the fine-grid oracle cheap.
    let body = small_scenario(false).replace(
        "\"run\": { \"horizon\": 0.4, \"dt\": 0.002 }",
        "\"run\": { \"horizon\": 0.3, \"dt\": 0.001 }",
    );
    let scenario = write_scenario(&dir, "s.json", &body);
    let out = Command::new(bin())
        .args(["--scenario"])
        .arg(&scenario)
        .args(["--out"])
        .arg(&dir.join("out"))
        .arg("--oracle")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("oracle deviation"), "{text}");
}

#[test]
fn convergence_flag_prints_order_table() {
    let dir = tmp("convergence-flag");
    let scenario_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/manufactured_smooth.json");
    let out = Command::new(bin())
        .args(["--scenario"])
        .arg(&scenario_path)
        .args(["--out"])
        .arg(&dir.join("out"))
        .args(["--convergence", "4e-3,2e-3,1e-3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("order"), "{text}");
}

#[test]
fn no_truncation_flag_disables_the_safeguard() {
    let dir = tmp("no-trunc");
    let scenario = write_scenario(&dir, "s.json", &small_scenario(false));
    let out = dir.join("out");
    let status = Command::new(bin())
        .args(["--scenario"])
        .arg(&scenario)
        .args(["--out"])
        .arg(&out)
        .arg("--no-truncation")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["resolved"]["truncation_enabled"], false);
}
