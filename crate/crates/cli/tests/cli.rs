use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn jumperg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumperg")).args(args).output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_report_and_honours_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config("simulate_jump_ou.toml");
    let o = jumperg(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "99", "--out", out, "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["seed"], 99);
    assert_eq!(report["config"]["seed"], 99);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["threads"], 2);
    assert!(fs::read_to_string(dir.path().join("paths.csv")).unwrap().contains("# seed="));
}

#[test]
fn lemma21_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("lemma21.toml");
    let o = jumperg(&["lemma21", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(json(&dir.path().join("report.json"))["result"]["summary"], "holds: 10000/10000");
}

#[test]
fn identical_reports_for_different_thread_counts() {
    let cfg = config("couple_jump_ou.toml");
    let reports: Vec<Vec<u8>> = ["1", "4"]
        .iter()
        .map(|t| {
            let dir = tempfile::tempdir().unwrap();
            let o = jumperg(&["couple", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--threads", t]);
            assert!(o.status.success());
            fs::read(dir.path().join("report.json")).unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn invalid_config_exits_nonzero_with_a_failure_record() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "kind = \"couple\"\nseed = 1\n[model]\nfamily = \"jump-ou\"\n[couple]\nx0 = [0.0]\ny0 = [0.1]\nhorizon = 1.0\ndt = 0.01\nn_paths = 10\ndelta = 0.5\ndeltt = 1\n").unwrap();
    let out = dir.path().join("run");
    let o = jumperg(&["couple", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("deltt"), "{stderr}");
    let record = json(&out.join("failure.json"));
    assert_eq!(record["error_kind"], "config");
    assert_eq!(record["issues"][0]["field"], "couple.deltt");
}

#[test]
fn wrong_subcommand_for_the_config_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("lemma21.toml");
    let o = jumperg(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("stiff.toml");
    fs::write(&cfg, "kind = \"simulate\"\nseed = 1\n[model]\nfamily = \"jump-ou\"\ntheta = 50.0\n[simulate]\nx0 = [0.0]\nhorizon = 1.0\ndt = 0.5\nn_paths = 4\n").unwrap();
    let out = dir.path().join("run");
    let o = jumperg(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&out.join("failure.json"))["error_kind"], "step-too-large");
}
