use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fedqueue");

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.ini");
    fs::write(
        &path,
        "[protocol]\nnum_rounds = 6\n\n[workload]\ntrain_samples = 400\ntest_samples = 100\n",
    )
    .unwrap();
    path
}

fn fedqueue(args: &[&str], root: &Path) -> Output {
    Command::new(BIN).args(args).env("FEDQUEUE_OUTPUT_ROOT", root).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_summary_rounds_and_events() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out_dir = tmp.path().join("run");
    let out = fedqueue(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], tmp.path());
    ok(&out);
    for f in ["summary.json", "rounds.csv", "events.jsonl", "config.ini"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let rounds = fs::read_to_string(out_dir.join("rounds.csv")).unwrap();
    assert_eq!(rounds.lines().count(), 1 + 6);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["algorithm"], "fedqueue");
}

#[test]
fn nonempty_output_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out_dir = tmp.path().join("run");
    fs::create_dir(&out_dir).unwrap();
    fs::write(out_dir.join("keep.txt"), "x").unwrap();
    let args = ["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
    let refused = fedqueue(&args, tmp.path());
    assert!(!refused.status.success());
    assert!(out_dir.join("keep.txt").exists());
    let mut forced = args.to_vec();
    forced.push("--force");
    ok(&fedqueue(&forced, tmp.path()));
    assert!(!out_dir.join("keep.txt").exists());
    assert!(out_dir.join("summary.json").exists());
}

#[test]
fn seed_flag_and_output_root_pick_the_default_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    ok(&fedqueue(&["run", "--config", cfg.to_str().unwrap(), "--seed", "7"], tmp.path()));
    let dir = tmp.path().join("fedqueue_seed7");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 7);
    let saved = fs::read_to_string(dir.join("config.ini")).unwrap();
    assert!(saved.lines().any(|l| l.replace(' ', "") == "seed=7"), "{saved}");
}

#[test]
fn invalid_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.ini");
    fs::write(&path, "[fedqueue]\nTsync = -1\n").unwrap();
    let out = fedqueue(&["run", "--config", path.to_str().unwrap()], tmp.path());
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn sweep_ablate_and_check_lemma1_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let c = cfg.to_str().unwrap();

    ok(&fedqueue(&["sweep", "--config", c, "--axis", "queue_rho", "--values", "0.1,0.9", "--trials", "2"], tmp.path()));
    let sweep = tmp.path().join("sweep_queue_rho");
    assert_eq!(fs::read_to_string(sweep.join("sweep.csv")).unwrap().lines().count(), 1 + 4);
    assert_eq!(fs::read_to_string(sweep.join("sweep_summary.csv")).unwrap().lines().count(), 1 + 2);

    ok(&fedqueue(&["ablate", "--config", c, "--trials", "1"], tmp.path()));
    let ablation = fs::read_to_string(tmp.path().join("ablation").join("ablation.csv")).unwrap();
    assert_eq!(ablation.lines().count(), 1 + 4);
    assert!(ablation.contains("w/o EWMA"));

    ok(&fedqueue(&["check-lemma1", "--config", c, "--trials", "1"], tmp.path()));
    let lemma = fs::read_to_string(tmp.path().join("lemma1").join("lemma1.csv")).unwrap();
    assert!(lemma.starts_with("rho,gamma,alpha,p_late"));
    assert_eq!(lemma.lines().count(), 1 + 9);
}
