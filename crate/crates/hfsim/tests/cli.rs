//! CLI behavior: exit codes (0 success, 2 usage/config, 3 domain) and
//! error reporting on standard error.

use std::process::Command;

fn hfsim(args: &[&str], cwd: &std::path::Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hfsim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn hfsim")
}

#[test]
fn missing_job_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = hfsim(&["allreduce", "--job", "nope.json", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn invalid_radix_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = hfsim(&["plan", "--endpoints", "10", "--radix", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn capacity_exceeded_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = hfsim(&["plan", "--endpoints", "1600", "--radix", "40"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_tensor_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"tensors": [{"id": "a", "dtype": "fp32", "shape": [4], "seed": 1}]}"#,
    )
    .unwrap();
    let save = hfsim(
        &["checkpoint", "save", "--spec", "spec.json", "--out", "c.hfck"],
        dir.path(),
    );
    assert_eq!(save.status.code(), Some(0));
    let load = hfsim(
        &["checkpoint", "load", "--ckpt", "c.hfck", "--id", "zzz", "--out", "z.bin"],
        dir.path(),
    );
    assert_eq!(load.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&load.stderr).contains("not found"));
}

#[test]
fn corrupt_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.hfck"), b"not a checkpoint at all").unwrap();
    let out = hfsim(&["checkpoint", "inspect", "--ckpt", "bad.hfck"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_json_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("job.json"), "{ this is not json").unwrap();
    let out = hfsim(&["allreduce", "--job", "job.json", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn perf_values_match_formulas() {
    let dir = tempfile::tempdir().unwrap();
    let ring = hfsim(&["perf", "--ring", "-n", "8"], dir.path());
    assert_eq!(ring.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&ring.stdout).trim(),
        "pcie_units=1.875"
    );

    let peak = hfsim(&["perf", "--peak", "--mem-bw", "320e9"], dir.path());
    let line = String::from_utf8_lossy(&peak.stdout);
    let value: f64 = line.trim().strip_prefix("peak_bw=").unwrap().parse().unwrap();
    assert!((value - 13.33e9).abs() < 0.05e9);

    let mult = hfsim(&["perf", "--multiplier", "--h2d", "memcpy"], dir.path());
    assert_eq!(
        String::from_utf8_lossy(&mult.stdout).trim(),
        "multiplier=30"
    );
}

#[test]
fn plan_prints_switch_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = hfsim(&["plan", "--endpoints", "800", "--radix", "40"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("switches: 60"), "{text}");

    let three = hfsim(
        &["plan", "--endpoints", "1600", "--radix", "40", "--layers", "3"],
        dir.path(),
    );
    let text = String::from_utf8_lossy(&three.stdout);
    assert!(text.contains("switches: 200"), "{text}");
}

#[test]
fn tree_dump_zone_split_must_cover_ranks() {
    let dir = tempfile::tempdir().unwrap();
    let out = hfsim(&["tree-dump", "-n", "8", "--zones", "3,3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
