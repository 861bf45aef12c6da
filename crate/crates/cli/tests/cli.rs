use std::io::Read;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lab(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lab"));
    cmd.args(args).env_remove("LAB_SEED");
    if let Some(s) = seed {
        cmd.env("LAB_SEED", s);
    }
    cmd.output().expect("spawn lab")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

const SMALL: &str = "\
experiment = thm1_persistence
seed = 99
reps = 50
sizes = 4, 16
";

#[test]
fn list_and_describe() {
    let out = lab(&["list"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["ex1_neyman_scott", "ex2_white_noise", "ex4_missing_data", "ex7_partial_linear", "thm1_persistence"] {
        assert!(text.contains(id), "list output lacks {id}:\n{text}");
    }

    let out = lab(&["describe", "ex2_white_noise"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("nu") && text.contains("prior_grid"), "{text}");
}

#[test]
fn unknown_experiment_and_bad_config_exit_2() {
    assert_eq!(lab(&["describe", "no_such_thing"], None).status.code(), Some(2));

    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "experiment = thm1_persistence\nreps = lots\n");
    let out = lab(&["run", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let missing = dir.path().join("absent.cfg");
    assert_eq!(lab(&["run", missing.to_str().unwrap()], None).status.code(), Some(2));
}

#[test]
fn run_writes_summary_and_raw_table() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let out_dir = dir.path().join("out");
    let out = lab(&["run", &cfg, "--out", out_dir.to_str().unwrap(), "--workers", "2"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(out_dir.join("thm1_persistence.summary.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("experiment_id,estimator,n,reps,"));
    assert!(header.ends_with(",master_seed"));
    let rows: Vec<_> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.ends_with(",99")));

    let gz = std::fs::File::open(out_dir.join("thm1_persistence.raw.csv.gz")).unwrap();
    let mut raw = String::new();
    flate2::read::GzDecoder::new(gz).read_to_string(&mut raw).unwrap();
    assert!(raw.lines().count() > 50);

    let out = lab(&["run", &cfg, "--out", out_dir.to_str().unwrap(), "--format", "json"], None);
    assert!(out.status.success());
    let json = std::fs::read_to_string(out_dir.join("thm1_persistence.summary.json")).unwrap();
    assert!(json.trim_start().starts_with(['{', '[']));
    assert!(json.contains("\"master_seed\""));
}

#[test]
fn same_seed_same_bytes_across_worker_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let read = |workers: &str| {
        let out_dir = dir.path().join(format!("w{workers}"));
        let out = lab(&["run", &cfg, "--out", out_dir.to_str().unwrap(), "--workers", workers], None);
        assert!(out.status.success());
        std::fs::read(out_dir.join("thm1_persistence.summary.csv")).unwrap()
    };
    assert_eq!(read("1"), read("3"));
}

#[test]
fn env_seed_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let out_dir = dir.path().join("out");
    let out = lab(&["run", &cfg, "--out", out_dir.to_str().unwrap()], Some("12345"));
    assert!(out.status.success());
    let csv = std::fs::read_to_string(out_dir.join("thm1_persistence.summary.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|r| r.ends_with(",12345")), "{csv}");

    let out = lab(&["run", &cfg, "--out", out_dir.to_str().unwrap()], Some("not-a-seed"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_abort_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "tiny.cfg",
        "experiment = ex4_missing_data\nseed = 1\nreps = 50\nsizes = 1\n",
    );
    let out = lab(&["run", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
