use std::path::Path;
use std::process::{Command, Output};

fn microtele(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_microtele"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn ideal_simulation_reaches_projective_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let out = microtele(
        &[
            "simulate",
            "--builtin",
            "teleport",
            "--ideal",
            "--set",
            "S=6",
            "--set",
            "nd=1",
        ],
        dir.path(),
    );
    let v = json(&out);
    let f = v["F"].as_f64().unwrap();
    assert!((f - 0.7992).abs() < 1e-3, "F = {f}");
    assert!((v["lambda"].as_f64().unwrap() - 1.0).abs() < 1e-3);
}

#[test]
fn missing_gain_is_a_binding_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = microtele(
        &[
            "simulate",
            "--builtin",
            "teleport",
            "--set",
            "S=6",
            "--set",
            "nd=1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`G`"));
}

#[test]
fn same_seed_gives_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--builtin",
        "teleport",
        "--set",
        "S=6",
        "--set",
        "G=21",
        "--set",
        "nd=1.1",
        "--samples",
        "2000",
        "--seed",
        "7",
    ];
    let a = microtele(&args, dir.path());
    let b = microtele(&args, dir.path());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(json(&a)["tomography"]["mean"].is_array());
}

#[test]
fn netlist_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.net"),
        "mode a\npsa a G=abc\noutput a\n",
    )
    .unwrap();
    let out = microtele(&["simulate", "--net", "bad.net"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.net") && err.contains("line 2"), "{err}");
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = microtele(&["simulate", "--net", "nope.net"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    let out = microtele(&["fit", "--data", "nope.csv"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
}

#[test]
fn file_netlist_simulates() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sq.net"),
        "mode a\nsource coherent a nd=$n\nsqueeze a S=$s\nloss a 1\noutput a\n",
    )
    .unwrap();
    let v = json(&microtele(
        &[
            "simulate", "--net", "sq.net", "--set", "n=2", "--set", "s=3",
        ],
        dir.path(),
    ));
    let sq = v["squeezing"]["squeezing_db"].as_f64().unwrap();
    assert!(sq > 0.0 && sq < 3.0, "{sq}");
    assert!(v["F"].as_f64().unwrap() < 1.0);
}

#[test]
fn sweep_writes_grid_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = microtele(
        &[
            "sweep",
            "--builtin",
            "teleport",
            "--grid",
            "G=18:26:1",
            "--grid",
            "S=0:7:0.5",
            "--out",
            "s.csv",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 9 * 15);
    assert!(text.starts_with("G_dB,S_dB,n_d,theta_rad,F"));
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("s.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["outputs"]["s.csv"].as_str().unwrap().len(), 64);
}

#[test]
fn bad_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    for grid in ["X=1:2:1", "G=5:1:1", "theta=0:1:0.5"] {
        let out = microtele(
            &[
                "sweep",
                "--builtin",
                "teleport",
                "--grid",
                grid,
                "--out",
                "s.csv",
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(2), "{grid}");
    }
}

#[test]
fn fit_recovers_synthetic_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = microtele(
        &[
            "sweep",
            "--builtin",
            "teleport",
            "--grid",
            "G=18:25:1",
            "--grid",
            "S=0:7:1",
            "--set",
            "chi1=0.1",
            "--set",
            "chi2=0.8",
            "--set",
            "T_K=0.05",
            "--out",
            "truth.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let v = json(&microtele(
        &[
            "fit",
            "--data",
            "truth.csv",
            "--out",
            "fit.json",
            "--seed",
            "3",
        ],
        dir.path(),
    ));
    let p = &v["fit"]["params"];
    assert!((p["chi1"].as_f64().unwrap() - 0.1).abs() < 1e-3, "{p}");
    assert!((p["chi2"].as_f64().unwrap() - 0.8).abs() < 1e-3, "{p}");
    assert!(v["residuals"]["rms"].as_f64().unwrap() < 1e-5);
    assert!(dir.path().join("fit.json.manifest.json").exists());
}

#[test]
fn wigner_integrates_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&microtele(
        &[
            "wigner",
            "--builtin",
            "teleport",
            "--set",
            "S=6",
            "--set",
            "G=21",
            "--set",
            "nd=1.1",
            "--out",
            "w.csv",
        ],
        dir.path(),
    ));
    assert!((v["integral"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    let rows = std::fs::read_to_string(dir.path().join("w.csv")).unwrap();
    assert!(rows.lines().filter(|l| !l.starts_with('#')).count() > 101 * 101);
}

#[test]
fn validate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = microtele(&["validate", "--seed", "11"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = microtele(
        &[
            "simulate",
            "--builtin",
            "teleport",
            "--set",
            "S=4",
            "--set",
            "G=20",
            "--set",
            "nd=2",
            "--samples",
            "500",
            "--out",
            "sim.json",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let before = std::fs::read(dir.path().join("sim.json")).unwrap();
    let out = microtele(&["replay", "sim.json.manifest.json"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(before, std::fs::read(dir.path().join("sim.json")).unwrap());

    std::fs::write(dir.path().join("sim.json"), "tampered").unwrap();
    let m: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("sim.json.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["seed"], 0);
    let out = microtele(&["replay", "sim.json.manifest.json"], dir.path());
    assert!(out.status.success(), "replay regenerates a tampered output");
}

#[test]
fn replay_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("a.net"),
        "mode a\nsource coherent a nd=1\noutput a\n",
    )
    .unwrap();
    let out = microtele(
        &[
            "wigner", "--net", "a.net", "--points", "21", "--out", "w.csv",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    std::fs::write(
        dir.path().join("a.net"),
        "mode a\nsource coherent a nd=2\noutput a\n",
    )
    .unwrap();
    let out = microtele(&["replay", "w.csv.manifest.json"], dir.path());
    assert_eq!(out.status.code(), Some(5));
}
