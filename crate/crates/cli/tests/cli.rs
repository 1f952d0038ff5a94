use std::path::Path;
use std::process::{Command, Output};

use siclop::experiment::{read_metrics, METRICS_HEADER};

const SMOKE: &str = "\
# tiny self-play run
width = 6
height = 6
agents = 2
obstacles = 2
step_limit = 8
budget = nodes:40
episodes = 5
train_every = 2
timing = off
";

fn siclop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siclop")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn smoke_training_writes_rows_and_a_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("smoke.cfg");
    std::fs::write(&cfg, SMOKE).unwrap();
    let metrics = dir.path().join("m.csv");
    let ckpt = dir.path().join("m.ckpt");
    let replay = dir.path().join("replay.log");
    std::fs::write(&cfg, format!("{SMOKE}replay_log = {}\n", replay.display())).unwrap();

    let out = siclop(&["train", "--config", path(&cfg), "--out", path(&metrics), "--checkpoint", path(&ckpt)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&metrics).unwrap();
    assert_eq!(text.lines().next(), Some(METRICS_HEADER));
    assert_eq!(read_metrics(&text).unwrap().len(), 5);
    siclop::model::load(&std::fs::read(&ckpt).unwrap()).unwrap();
    assert_eq!(siclop::replay::read_log(&replay).unwrap().len(), 5);

    // eval reads the checkpoint without touching it
    let before = std::fs::read(&ckpt).unwrap();
    let eval_metrics = dir.path().join("e.csv");
    let out = siclop(&["eval", "--config", path(&cfg), "--checkpoint", path(&ckpt), "--out", path(&eval_metrics)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_metrics(&std::fs::read_to_string(&eval_metrics).unwrap()).unwrap().len(), 5);
    assert_eq!(std::fs::read(&ckpt).unwrap(), before);
}

#[test]
fn identical_seeds_give_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("smoke.cfg");
    std::fs::write(&cfg, SMOKE).unwrap();
    let run = |name: &str, jobs: &str| {
        let m = dir.path().join(format!("{name}.csv"));
        let c = dir.path().join(format!("{name}.ckpt"));
        let out = siclop(&["train", "--config", path(&cfg), "--seed", "7", "--jobs", jobs, "--out", path(&m), "--checkpoint", path(&c)]);
        assert!(out.status.success());
        (std::fs::read(m).unwrap(), std::fs::read(c).unwrap())
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "2"));
}

#[test]
fn empty_scenario_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = dir.path().join("empty.txt");
    std::fs::write(&scenarios, "# nothing here\n").unwrap();
    let out = siclop(&["eval", "--planner", "random", "--scenarios", path(&scenarios), "--out", path(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no scenarios"));
}

#[test]
fn exit_codes_separate_config_and_io_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.cfg");
    assert_eq!(siclop(&["train", "--config", path(&missing)]).status.code(), Some(3));

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "episodes = zero\n").unwrap();
    assert_eq!(siclop(&["train", "--config", path(&bad)]).status.code(), Some(2));

    assert_eq!(siclop(&["eval", "--planner", "siclop"]).status.code(), Some(2));
    assert_eq!(siclop(&["eval", "--planner", "greedy"]).status.code(), Some(2));
}

#[test]
fn generated_scenarios_feed_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("smoke.cfg");
    std::fs::write(&cfg, SMOKE).unwrap();
    let scenarios = dir.path().join("s.txt");
    let out = siclop(&["scenarios", "--config", path(&cfg), "--count", "3", "--out", path(&scenarios)]);
    assert!(out.status.success());
    let metrics = dir.path().join("r.csv");
    let out = siclop(&[
        "eval", "--config", path(&cfg), "--planner", "uniform-mcts", "--scenarios", path(&scenarios), "--out", path(&metrics),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_metrics(&std::fs::read_to_string(&metrics).unwrap()).unwrap().len(), 3);
    let out = siclop(&["bench", "--config", path(&cfg), "--planner", "random", "--calls", "10"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("calls 10"));
}
