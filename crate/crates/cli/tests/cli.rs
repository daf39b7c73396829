use std::path::Path;
use std::process::{Command, Output};

use fac_core::oracle::hazard_chain_cmdp;

fn fac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fac")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_BRAKING: &str = "\
task : str = braking
seed : u64 = 3
total_env_steps : u64 = 600
eval_interval : u64 = 300
eval_episodes : u64 = 2
warmup_steps : u64 = 200
Replay batch size : u64 = 16
Number of hidden units per layer : u64 = 8
Max episode length (N) : u64 = 100
";

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn train_eval_feasmap_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", SMALL_BRAKING);
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();

    let o = fac(&["train", "--config", &cfg, "--out", out_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.txt", "metrics.csv", "final.ckpt", "return.png", "c_rate.png", "vc_hist.png"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);

    let ckpt = out.join("final.ckpt");
    let eval_dir = dir.path().join("eval");
    let o = fac(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--episodes",
        "4",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("episodes: 4"));
    let episodes = std::fs::read_to_string(eval_dir.join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 5);

    let map_dir = dir.path().join("map");
    let o = fac(&[
        "feasmap",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--grid",
        "0:10:1,0:10:1",
        "--out",
        map_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("(100 cells)"));
    for f in ["feasmap.txt", "feasmap_classes.png", "feasmap_lambda.png"] {
        assert!(map_dir.join(f).exists(), "missing {f}");
    }
}

#[test]
fn seed_flag_overrides_config_and_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", SMALL_BRAKING);
    let mut metrics = Vec::new();
    for run in ["a", "b", "c"] {
        let out = dir.path().join(run);
        let seed = if run == "c" { "4" } else { "9" };
        let o = fac(&["train", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        metrics.push(std::fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);
    assert_ne!(metrics[0], metrics[2]);
}

#[test]
fn oracle_reports_the_partition() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "chain.cmdp", &hazard_chain_cmdp().to_text());
    let o = fac(&["oracle", "--config", &path]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("feasible_states: [0, 1, 2, 3]"), "{text}");
    assert!(text.contains("infeasible_states: [4]"));
    assert!(text.contains("j_statewise_ge_j_expected: pass"));
}

#[test]
fn config_errors_exit_with_code_two_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.cfg",
        "task : str = braking\nReplay batch size : u64 = 0\n",
    );
    let o = fac(&["train", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Replay batch size"));

    let unknown = write(dir.path(), "unknown.cfg", "task : str = braking\nlearning_rate : f64 = 1\n");
    let o = fac(&["train", "--config", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
}

#[test]
fn missing_checkpoint_is_a_runtime_failure() {
    let o = fac(&["eval", "--checkpoint", "/nonexistent/final.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
}
