use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn apsk() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_apsk"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn empty_power_grid_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let status = apsk()
        .args([
            "--experiment",
            "sep_sweep",
            "--pmin-dbm",
            "2",
            "--pmax-dbm",
            "-2",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unsupported_order_for_optimization_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let status = apsk()
        .args(["--experiment", "partition_sweep", "--M", "6", "--out"])
        .arg(tmp.path().join("run"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn malformed_config_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"experiment": "sep_sweep", "unknown_field": 1}"#).unwrap();
    let status = apsk().arg("--config").arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn scatter_corners_give_four_point_clouds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scatter");
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"experiment": "scatter", "m": 16, "pmin_dbm": -10, "pmax_dbm": 0, "pstep_db": 10,
                "scatter_lengths_km": [1000, 5000], "scatter_samples": 50, "out": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let status = apsk().arg("--config").arg(&cfg).status().unwrap();
    assert!(status.success());
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 4);
    for name in outputs {
        let text = fs::read_to_string(out.join(name.as_str().unwrap())).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("symbol,x_re,x_im,y_re,y_im"));
        assert_eq!(lines.count(), 16 * 50);
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"experiment": "sep_sweep", "m": 8, "seed": 5}"#).unwrap();
    let status = apsk()
        .arg("--config")
        .arg(&cfg)
        .args(["--M", "2", "--pmin-dbm", "-6", "--pmax-dbm", "-6", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let m = manifest(&out);
    assert_eq!(m["config"]["m"], 2);
    assert_eq!(m["seed"], 5);
    assert_eq!(m["schema_version"], 1);
    let rows = fs::read_to_string(out.join("sep_sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
}

#[test]
fn identical_runs_give_identical_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let status = apsk()
            .args([
                "--experiment",
                "sep_sweep",
                "--M",
                "4",
                "--detector",
                "ml",
                "--pmin-dbm",
                "-4",
                "--pmax-dbm",
                "-4",
                "--max-rings",
                "2",
                "--seed",
                "9",
                "--out",
            ])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        fs::read(out.join("sep_sweep.csv")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().contains("monte_carlo"));
}

#[test]
fn four_point_sweep_covers_the_power_ladder() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let status = apsk()
        .args(["--experiment", "partition_sweep", "--M", "4", "--L-km", "7000"])
        .args(["--pmin-dbm", "-15", "--pmax-dbm", "5", "--pstep-db", "0.5", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(out.join("partition_sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("P_dBm,l,r,sep,sep_ref_qam16_ts,sep_ref_awgn_ml"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 41);
    assert!(rows[0].starts_with("-15,4,"));
}

#[test]
fn labeling_study_reports_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("lab");
    let status = apsk()
        .args([
            "--experiment",
            "labeling_study",
            "--M",
            "8",
            "--pmin-dbm",
            "-7",
            "--pmax-dbm",
            "-7",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let mut reader = csv::Reader::from_path(out.join("labeling_study.csv")).unwrap();
    let row = reader.records().next().unwrap().unwrap();
    let sep_over_bits: f64 = row[6].parse().unwrap();
    for col in [4, 5, 7] {
        let bep: f64 = row[col].parse().unwrap();
        assert!(bep >= sep_over_bits * (1.0 - 1e-9));
    }
    let best: f64 = row[7].parse().unwrap();
    let proposed: f64 = row[5].parse().unwrap();
    assert!(best <= proposed * (1.0 + 1e-12));
    assert!(out.join("labeling.csv").exists());
}

#[test]
fn failure_after_validation_still_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("blocked");
    fs::create_dir_all(out.join("sep_sweep.csv")).unwrap();
    let status = apsk()
        .args([
            "--experiment",
            "sep_sweep",
            "--pmin-dbm",
            "-6",
            "--pmax-dbm",
            "-6",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert!(m["error"].as_str().unwrap().contains("i/o"));
    assert!(m["outputs"].as_array().unwrap().is_empty());
}

#[test]
fn invalid_optimizer_settings_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    let cfg = tmp.path().join("cfg.json");
    let mut optimizer = default_optimizer();
    optimizer["quadrature"]["nodes_per_panel"] = 0.into();
    let doc = serde_json::json!({ "experiment": "radius_trace", "m": 8, "out": out, "optimizer": optimizer });
    fs::write(&cfg, doc.to_string()).unwrap();
    let status = apsk().arg("--config").arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists());
}

fn default_optimizer() -> Value {
    serde_json::from_str(
        r#"{"nelder_mead": {"reflection": 1.0, "expansion": 2.0, "contraction": 0.5, "shrink": 0.5,
            "tolerance": 1e-4, "max_iterations": 400, "starts": 8, "jitter": 0.5, "initial_step": 0.25},
            "grid": {"half_width": 10.0, "points_per_sd": 8.0},
            "quadrature": {"nodes_per_panel": 16, "panel_width": 1.0, "half_width": 10.0, "core_width": 6.0},
            "cache_step": 1e-3, "seed": 0, "shortlist": null}"#,
    )
    .unwrap()
}
