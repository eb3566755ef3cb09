use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nematicon(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nematicon"))
        .args(args)
        .current_dir(cwd)
        .env("NEMATICON_OUTPUT_ROOT", cwd.join("runs"))
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn frequency_outside_unit_interval_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nematicon(&["nehari", "--sigma", "1.2"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(0, 1)"), "{}", stderr(&o));
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn unknown_flags_and_missing_subcommands_print_usage() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [&["ground", "--charge", "3"][..], &[][..], &["frobnicate"][..]] {
        let o = nematicon(args, tmp.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    }
    assert_eq!(nematicon(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"a": 6.0, "charge": 6.0}"#).unwrap();
    let o = nematicon(&["ground", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("charge"));
}

#[test]
fn ground_state_pipeline_and_collision() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let o = nematicon(&["ground", "--a", "6", "--n", "1024"], t);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let g = t.join("runs/ground");
    let m = manifest(&g);
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(files, ["phi.field", "summary.json", "v.field"]);

    let again = nematicon(&["ground", "--a", "6", "--n", "1024"], t);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--force"));
    assert_eq!(nematicon(&["ground", "--a", "6", "--n", "1024", "--force"], t).status.code(), Some(0));

    let g_arg = g.to_str().unwrap();
    for cmd in ["spectrum", "decay"] {
        let o = nematicon(&[cmd, "--input", g_arg], t);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
    let spec: Value = serde_json::from_slice(&std::fs::read(t.join("runs/spectrum/spectrum.json")).unwrap()).unwrap();
    assert_eq!(spec["verdict"], "Coercive");
    assert!(t.join("runs/spectrum/spectra.csv").exists());
    assert!(t.join("runs/decay/decay.csv").exists());
}

#[test]
fn solver_failure_and_corrupt_input_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let o = nematicon(&["ground", "--a", "1.5", "--n", "512"], t);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no ground state"));

    assert_eq!(nematicon(&["ground", "--a", "6", "--n", "512", "--out", "g"], t).status.code(), Some(0));
    let v = t.join("g/v.field");
    let mut bytes = std::fs::read(&v).unwrap();
    bytes.truncate(bytes.len() - 8);
    std::fs::write(&v, bytes).unwrap();
    let o = nematicon(&["spectrum", "--input", "g", "--out", "s"], t);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("corrupt"), "{}", stderr(&o));
}

#[test]
fn angle_and_short_evolution_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let o = nematicon(&["angle", "--amplitude", "0.8", "--n", "512", "--out", "th"], t);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(t.join("th/theta.field").exists());

    let cfg = t.join("e.json");
    std::fs::write(
        &cfg,
        r#"{"n": 1024, "plane_n": 128, "dz": 0.01, "z_end": 0.5, "record_every": 10,
            "perturbation": {"kind": "bump", "amplitude": 0.01, "width": 2.0}}"#,
    )
    .unwrap();
    let o = nematicon(&["evolve", "--config", cfg.to_str().unwrap(), "--out", "ev"], t);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = std::fs::read_to_string(t.join("ev/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 6);
    assert!(t.join("ev/final_u.field").exists());
}

fn file_hashes(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["path"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn sweep_orchestration_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = t.join("sweep.json");
    std::fs::write(
        &cfg,
        r#"{"kind": "sigma", "values": [0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.999],
            "parallelism": 4, "r_max": 20.0, "n": 256}"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();

    // one point fails: recorded, and only --keep-going turns that into success
    let o = nematicon(&["sweep", "--config", c, "--out", "sw"], t);
    assert_eq!(o.status.code(), Some(1));
    let m = manifest(&t.join("sw"));
    let tasks = m["tasks"].as_array().unwrap();
    assert_eq!(tasks.len(), 8);
    assert_eq!(tasks.iter().filter(|x| x["state"] == "failed").count(), 1);
    assert_eq!(tasks[7]["state"], "failed");
    assert!(tasks[0]["name"].as_str().unwrap().starts_with("000-"));

    let first = file_hashes(&t.join("sw"));
    assert_eq!(nematicon(&["sweep", "--config", c, "--out", "sw"], t).status.code(), Some(2));
    let o = nematicon(&["sweep", "--config", c, "--out", "sw", "--force", "--keep-going"], t);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(file_hashes(&t.join("sw")), first);

    // the result files do not depend on the worker count
    let o = nematicon(&["sweep", "--config", c, "--out", "serial", "--keep-going", "--parallelism", "1"], t);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(file_hashes(&t.join("serial")), first);
}

#[test]
fn force_never_replaces_foreign_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    std::fs::create_dir(t.join("mine")).unwrap();
    std::fs::write(t.join("mine/notes.txt"), "keep").unwrap();
    let o = nematicon(&["ground", "--a", "6", "--n", "512", "--out", "mine", "--force"], t);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(std::fs::read_to_string(t.join("mine/notes.txt")).unwrap(), "keep");
}

#[test]
fn quick_verification_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nematicon(&["verify", "--quick"], tmp.path());
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{out}\n{}", stderr(&o));
    assert_eq!(out.lines().filter(|l| l.starts_with("[PASS]")).count(), 12);
    assert!(tmp.path().join("runs/verify/verify_report.json").exists());
}
