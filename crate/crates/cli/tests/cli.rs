use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(file)
}

fn smpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smpc")).args(args).output().expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(text: &str) -> Vec<serde_json::Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn run_writes_a_log_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s2.jsonl");
    let o = smpc(&["run", "--scenario", arg(&scenario("scenario2.toml")), "--steps", "40", "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let log = lines(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(log.iter().filter(|v| v["type"] == "step").count(), 40);
    let summary = log.last().unwrap();
    assert_eq!(summary["type"], "summary");
    assert_eq!(summary["collision"], false);
    assert!(String::from_utf8_lossy(&o.stderr).contains("J_sim"));
}

#[test]
fn run_without_out_prints_the_log() {
    let o =
        smpc(&["run", "--scenario", arg(&scenario("scenario1.toml")), "--steps", "5", "--hl", "off", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let log = lines(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(log.len(), 6);
    let summary = log.last().unwrap();
    assert_eq!(summary["maneuver_planner"], false);
    assert_eq!(summary["seed"], 3);
}

#[test]
fn same_seed_same_bytes() {
    let file = scenario("scenario1.toml");
    let args = ["run", "--scenario", arg(&file), "--steps", "60", "--seed", "11"];
    let a = smpc(&args);
    let b = smpc(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn dump_qp_writes_every_program() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.jsonl");
    let o =
        smpc(&["run", "--scenario", arg(&scenario("scenario2.toml")), "--steps", "3", "--out", arg(&out), "--dump-qp"]);
    assert_eq!(o.status.code(), Some(0));
    let dump = std::fs::read_to_string(dir.path().join("run.jsonl.qp.txt")).unwrap();
    for step in 0..3 {
        assert!(dump.contains(&format!("# step {step}")));
    }
}

#[test]
fn bad_configuration_exits_with_one() {
    let o = smpc(&["run", "--scenario", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.toml");
    let text = std::fs::read_to_string(scenario("scenario2.toml")).unwrap();
    std::fs::write(&broken, text.replace("beta_ped = 0.9", "beta_ped = 1.5")).unwrap();
    let o = smpc(&["run", "--scenario", arg(&broken)]);
    assert_eq!(o.status.code(), Some(1));
    std::fs::write(&broken, "name = 3").unwrap();
    let o = smpc(&["run", "--scenario", arg(&broken)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn collision_exits_with_three() {
    // a pedestrian standing inside the braking distance cannot be avoided
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("blocked.toml");
    let text = std::fs::read_to_string(scenario("scenario2.toml")).unwrap();
    let blocked = text.replace(
        "initial = { x = -15.0, vx = 0.0, y = -11.0, vy = 1.2 }",
        "initial = { x = -96.0, vx = 0.0, y = -1.5, vy = 0.0 }",
    );
    assert_ne!(blocked, text);
    std::fs::write(&file, blocked).unwrap();
    let o = smpc(&[
        "run",
        "--scenario",
        arg(&file),
        "--steps",
        "20",
        "--no-noise",
        "--out",
        arg(&dir.path().join("log.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn validate_reports_each_agent() {
    let o = smpc(&["validate", "--scenario", arg(&scenario("scenario1.toml")), "--trials", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4);
    assert!(text.contains("tv1 low") && text.contains("tv2 high"));
}

#[test]
fn sweep_summarises_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.json");
    let o = smpc(&[
        "sweep",
        "--scenario",
        arg(&scenario("scenario2.toml")),
        "--seeds",
        "4",
        "--beta-ped",
        "0.8",
        "--out",
        arg(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().contains("collision frequency 0.0000"));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 4);
    assert_eq!(summary["variation"]["beta_ped"], 0.8);
}
