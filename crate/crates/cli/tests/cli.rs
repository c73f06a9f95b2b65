//! End-to-end checks of the command-line binary: flag handling, config
//! files, artifact layout, and byte-identical reruns.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_udn-mlb"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn help_lists_the_public_flags() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--controller",
        "--mode",
        "--seeds",
        "--steps",
        "--cbr",
        "--n-sbs",
        "--n-users",
        "--out",
    ] {
        assert!(text.contains(flag), "help must document {flag}");
    }
}

#[test]
fn rejects_unknown_controller() {
    let out = bin().args(["--controller", "wizardry"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("controller"), "error should name the field: {err}");
}

#[test]
fn config_file_plus_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "controller=rule-static\nn_sbs=4\nn_users=24\nsteps=160\nwarmup=40\nseeds=1\narea_side=150\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["--config", cfg_path.to_str().unwrap()])
        .args(["--controller", "rule-adaptive"]) // flag wins over the file
        .args(["--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read(&out_dir.join("summary.csv"));
    assert!(summary.contains("rule-adaptive"));
    for artifact in [
        "seed0/per_step.csv",
        "seed0/loads.csv",
        "seed0/clustering.csv",
        "seed0/scenario.txt",
        "seed0/config.txt",
    ] {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }
    // Per-step schema: header plus one row per step.
    let per_step = read(&out_dir.join("seed0/per_step.csv"));
    let mut lines = per_step.lines();
    assert_eq!(lines.next().unwrap(), "step,reward,max_load,ho_success,ho_fail");
    assert_eq!(per_step.lines().count(), 161);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path| {
        let status = bin()
            .args(["--controller", "qlearning"])
            .args(["--seeds", "1", "--steps", "200", "--warmup", "50"])
            .args(["--n-sbs", "4", "--n-users", "24"])
            .args(["--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a);
    run(&b);
    for f in ["summary.csv", "seed0/per_step.csv", "seed0/loads.csv", "seed0/clustering.csv"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} must be byte-identical");
    }
}
