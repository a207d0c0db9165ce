use std::path::PathBuf;

use smpc_core::ego::{EgoInput, EgoState};
use smpc_core::path::{ConflictZone, PathSpec, SegmentSpec};
use smpc_core::qp::QpStatus;
use smpc_core::sim::{run_episode, score, Scenario, StepRecord};

fn shipped(file: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(file);
    Scenario::load(&path).unwrap()
}

fn empty_road(steps: usize, hl: bool) -> Scenario {
    let mut scn = shipped("scenario2.toml");
    scn.name = "empty_road".into();
    scn.agents.clear();
    scn.steps = steps;
    scn.maneuver_planner = hl;
    scn.path = PathSpec {
        start: [0.0, 0.0],
        heading_deg: 0.0,
        segments: vec![SegmentSpec::Line { length: 2000.0 }],
        conflict_zone: ConflictZone { x_min: 1500.0, x_max: 1510.0, y_min: -3.0, y_max: 3.0 },
        corridor: 20.0,
    };
    scn.ego.initial = EgoState::new(10.0, 0.0, 0.0, 10.0);
    scn
}

fn record(v: f64, a: f64) -> StepRecord {
    let mut scn = empty_road(1, false);
    scn.ego.initial = EgoState::new(10.0, 0.0, 0.0, v);
    let mut r = run_episode(&scn).unwrap().steps.remove(0);
    r.ego = EgoState::new(10.0, 0.0, 0.0, v);
    r.input = EgoInput::new(a, 0.0);
    r
}

#[test]
fn empty_road_holds_cruise_speed() {
    for hl in [false, true] {
        let log = run_episode(&empty_road(100, hl)).unwrap();
        assert_eq!(log.steps.len(), 100);
        assert!(log.summary.j_sim < 1.0, "hl {hl}: J = {}", log.summary.j_sim);
        assert!(log.steps.iter().all(|r| (r.ego.v - 10.0).abs() < 1e-6));
    }
}

#[test]
fn score_examples() {
    let q = [0.0, 1.0, 1.0, 1.0];
    let r = [0.33, 5.0];
    let s = [0.33, 15.0];
    assert_eq!(score(&[record(10.0, 0.0)], &q, &r, &s, 10.0), 0.0);
    assert!((score(&[record(11.0, 0.0)], &q, &r, &s, 10.0) - 1.0).abs() < 1e-12);
    // first input is differenced against zero
    let j = score(&[record(10.0, 1.0)], &q, &r, &s, 10.0);
    assert!((j - 0.66).abs() < 1e-12);
}

#[test]
fn maneuver_updates_follow_the_slow_rate() {
    let scn = shipped("scenario1.toml");
    let k_bar = scn.high_level.steps_per_update(scn.low_level.t);
    assert_eq!(k_bar, 10);
    for steps in [1, 10, 11, 57] {
        let mut s = scn.clone();
        s.steps = steps;
        s.noise = false;
        let log = run_episode(&s).unwrap();
        assert_eq!(log.summary.plan_updates, steps.div_ceil(k_bar));
        assert!(log.plans.iter().all(|p| p.step % k_bar == 0));
    }
    let mut off = scn.clone();
    off.maneuver_planner = false;
    off.steps = 30;
    assert!(run_episode(&off).unwrap().plans.is_empty());
}

#[test]
fn states_move_continuously() {
    for file in ["scenario1.toml", "scenario2.toml"] {
        let scn = shipped(file);
        let log = run_episode(&scn).unwrap();
        let t = scn.low_level.t;
        let v_max = scn.ego.params.v_max;
        for w in log.steps.windows(2) {
            let ds = w[1].ego.s - w[0].ego.s;
            assert!((-1e-9..=v_max * t + 1e-9).contains(&ds), "{file} step {}: ds {ds}", w[0].step);
            let dv = (w[1].ego.v - w[0].ego.v).abs();
            assert!(dv <= 9.0 * t + 1e-9);
            let dp =
                ((w[1].position[0] - w[0].position[0]).powi(2) + (w[1].position[1] - w[0].position[1]).powi(2)).sqrt();
            assert!(dp <= v_max * t + 0.05, "{file} step {}: jump {dp}", w[0].step);
            for (a, b) in w[0].agents.iter().zip(&w[1].agents) {
                let jump = (b.position() - a.position()).norm();
                assert!(jump < 20.0 * t, "{file} agent jump {jump}");
            }
        }
    }
}

#[test]
fn zero_noise_ignores_the_seed() {
    let mut scn = shipped("scenario2.toml");
    scn.noise = false;
    let a = run_episode(&scn).unwrap();
    scn.seed = 999;
    let b = run_episode(&scn).unwrap();
    assert_eq!(a.steps, b.steps);
    assert_eq!(a.plans, b.plans);
}

#[test]
fn episodes_respect_bounds_and_solve_every_step() {
    for file in ["scenario1.toml", "scenario2.toml"] {
        let scn = shipped(file);
        let log = run_episode(&scn).unwrap();
        assert_eq!(log.steps.len(), scn.steps);
        assert!(log.summary.failure.is_none());
        assert!(!log.summary.collision);
        let p = &scn.ego.params;
        for r in &log.steps {
            assert_eq!(r.status, QpStatus::Optimal);
            assert!(r.ego.d.abs() <= p.lateral_bound() + 1e-6, "{file} step {} d {}", r.step, r.ego.d);
            assert!(r.ego.v >= 0.0 && r.ego.v <= p.v_max + 1e-6);
            assert!(r.input.a >= p.u_min[0] - 1e-9 && r.input.a <= p.u_max[0] + 1e-9);
            assert!(r.input.delta.abs() <= p.u_max[1] + 1e-9);
        }
        for w in log.steps.windows(2) {
            let du = w[1].input.delta - w[0].input.delta;
            assert!(du.abs() <= p.du_max[1] + 1e-9);
        }
    }
}

#[test]
fn log_lines_are_tagged_json() {
    let mut scn = shipped("scenario1.toml");
    scn.steps = 25;
    let log = run_episode(&scn).unwrap();
    let text = log.to_jsonl_string();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let kinds: Vec<&str> = lines.iter().map(|v| v["type"].as_str().unwrap()).collect();
    assert_eq!(kinds.iter().filter(|k| **k == "step").count(), 25);
    assert_eq!(kinds.iter().filter(|k| **k == "plan").count(), 3);
    assert_eq!(*kinds.last().unwrap(), "summary");
    assert_eq!(kinds[0], "plan");
    let summary = lines.last().unwrap();
    assert!(summary["j_sim"].as_f64().unwrap().is_finite());
    assert_eq!(summary["min_gaps"].as_array().unwrap().len(), 2);
    let step = &lines[1];
    for key in ["time", "ego", "input", "v_ref", "agents", "constraints", "active", "max_slack", "status", "gaps"] {
        assert!(step.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn scenario_files_round_trip() {
    for file in ["scenario1.toml", "scenario2.toml"] {
        let scn = shipped(file);
        let text = scn.to_toml_string().unwrap();
        assert_eq!(Scenario::from_toml_str(&text).unwrap(), scn);
    }
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    let text =
        std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/scenario2.toml"))
            .unwrap();
    assert!(Scenario::from_toml_str(&format!("bogus = 1\n{text}")).is_err());
    let mut scn = shipped("scenario2.toml");
    scn.low_level.beta_ped = 1.0;
    assert!(scn.build().is_err());
    let mut scn = shipped("scenario2.toml");
    scn.high_level.t_h = 0.3;
    assert!(scn.build().is_err());
    let mut scn = shipped("scenario2.toml");
    scn.ego.initial.v = 20.0;
    assert!(scn.build().is_err());
    let mut scn = shipped("scenario2.toml");
    scn.steps = 0;
    assert!(scn.build().is_err());
}
