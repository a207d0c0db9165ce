//! Closed-loop episodes, their logs and scoring.

use std::io::{self, Write};

use nalgebra::{Vector2, Vector4};
use serde::Serialize;

use crate::agents::{agent_sim_step, AgentKind, AgentState};
use crate::ego::{plant_step, EgoInput, EgoState};
use crate::error::SimError;
use crate::maneuver::{enumerate_and_solve, project_agents_high_level, reference_for_low_level, ManeuverPlan};
use crate::noise::{psd_sqrt, GaussianStream};
use crate::qp::{QpStatus, QuadraticProgram};
use crate::sim::scenario::Scenario;
use crate::trajectory::{
    agent_rect, control_step, ego_pose, ego_rect, stage_cost, AgentSnapshot, ConstraintKind, ReferenceSource,
    ReferenceTrajectory, RowOrigin,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintTag {
    pub agent: usize,
    pub kind: ConstraintKind,
}

/// State of the loop at the start of one control period and what was applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub ego: EgoState,
    pub position: [f64; 2],
    pub heading: f64,
    pub input: EgoInput,
    pub v_ref: f64,
    pub reference: ReferenceSource,
    pub stale_plan: bool,
    pub agents: Vec<AgentState>,
    pub constraints: Vec<ConstraintTag>,
    pub active: Vec<RowOrigin>,
    pub max_slack: f64,
    pub status: QpStatus,
    pub fallback: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Gap between the ego and each agent after the step.
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanRecord {
    pub step: usize,
    pub time: f64,
    #[serde(flatten)]
    pub plan: ManeuverPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub scenario: String,
    pub seed: u64,
    pub maneuver_planner: bool,
    pub steps: usize,
    pub j_sim: f64,
    pub collision: bool,
    pub collision_step: Option<usize>,
    pub min_gaps: Vec<f64>,
    pub min_speed: f64,
    pub fallback_steps: usize,
    pub plan_updates: usize,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub steps: Vec<StepRecord>,
    pub plans: Vec<PlanRecord>,
    pub summary: EpisodeSummary,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine<'a> {
    Step(&'a StepRecord),
    Plan(&'a PlanRecord),
    Summary(&'a EpisodeSummary),
}

impl EpisodeLog {
    /// Writes one JSON object per line: plans and steps in time order, then
    /// the summary.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut plans = self.plans.iter().peekable();
        for step in &self.steps {
            while let Some(p) = plans.next_if(|p| p.step <= step.step) {
                serde_json::to_writer(&mut w, &LogLine::Plan(p))?;
                w.write_all(b"\n")?;
            }
            serde_json::to_writer(&mut w, &LogLine::Step(step))?;
            w.write_all(b"\n")?;
        }
        for p in plans {
            serde_json::to_writer(&mut w, &LogLine::Plan(p))?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &LogLine::Summary(&self.summary))?;
        w.write_all(b"\n")
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn min_speed(&self) -> f64 {
        self.steps.iter().map(|s| s.ego.v).fold(f64::INFINITY, f64::min)
    }
}

/// Closed-loop cost against a fixed cruise speed: `Σ ‖Δξ‖²_Q + ‖u‖²_R + ‖Δu‖²_S`,
/// with `Δξ = [0, d, φ, v − v_ref]` and `u_{−1} = 0`.
pub fn score(steps: &[StepRecord], q: &[f64; 4], r: &[f64; 2], s: &[f64; 2], v_ref: f64) -> f64 {
    let mut prev = Vector2::zeros();
    let mut j = 0.0;
    for rec in steps {
        let u = rec.input.to_vector();
        let dxi = Vector4::new(0.0, rec.ego.d, rec.ego.phi, rec.ego.v - v_ref);
        j += stage_cost(&dxi, &u, &(u - prev), q, r, s);
        prev = u;
    }
    j
}

/// Runs one episode. Configuration problems are returned as errors; a
/// numerical failure mid-episode truncates the log and is reported in the
/// summary.
pub fn run_episode(scn: &Scenario) -> Result<EpisodeLog, SimError> {
    run_episode_with(scn, |_, _| {})
}

/// As [`run_episode`], calling `on_solve(step, program)` after every
/// low-level solve.
pub fn run_episode_with(
    scn: &Scenario,
    mut on_solve: impl FnMut(usize, &QuadraticProgram),
) -> Result<EpisodeLog, SimError> {
    let path = scn.build()?;
    let params = &scn.ego.params;
    let ll = &scn.low_level;
    let hl = &scn.high_level;
    let k_bar = hl.steps_per_update(ll.t);
    let kinds: Vec<&AgentKind> = scn.agents.iter().map(|a| &a.model).collect();
    let sqrt_cov: Vec<_> = kinds.iter().map(|k| psd_sqrt(&k.noise_matrix())).collect();
    let mut streams: Vec<GaussianStream> = (0..kinds.len()).map(|i| GaussianStream::new(scn.seed, i as u64)).collect();

    let mut ego = scn.ego.initial;
    let mut agents: Vec<AgentState> = scn.agents.iter().map(|a| a.initial).collect();
    let mut u_prev = EgoInput::default();
    let mut plan: Option<ManeuverPlan> = None;
    let mut steps = Vec::with_capacity(scn.steps);
    let mut plans = Vec::new();
    let mut min_gaps = vec![f64::INFINITY; kinds.len()];
    let mut collision_step = None;
    let mut failure = None;

    for step in 0..scn.steps {
        let time = step as f64 * ll.t;
        let snaps: Vec<AgentSnapshot> = kinds
            .iter()
            .zip(&agents)
            .enumerate()
            .map(|(id, (kind, state))| AgentSnapshot { id, kind, state: *state })
            .collect();

        if scn.maneuver_planner && step % k_bar == 0 {
            let planned = project_agents_high_level(&ego, &snaps, &path, params, hl, ll.t)
                .and_then(|specs| enumerate_and_solve(ego.s, ego.v, time, &specs, &path, params, hl));
            match planned {
                Ok(p) => {
                    plans.push(PlanRecord { step, time, plan: p.clone() });
                    plan = Some(p);
                }
                Err(e) => {
                    failure = Some(SimError::Numerical { step, message: e.to_string() }.to_string());
                    break;
                }
            }
        }
        let reference = match &plan {
            Some(p) => reference_for_low_level(p, time, ego.s, ll.t, ll.n),
            None => ReferenceTrajectory::cruise(ego.s, hl.v_ref, ll.n, ll.t),
        };
        let out = match control_step(&ego, &u_prev, &path, &snaps, &reference, params, ll) {
            Ok(o) => o,
            Err(e) => {
                failure = Some(SimError::Numerical { step, message: e.to_string() }.to_string());
                break;
            }
        };
        on_solve(step, &out.ocp.qp);
        let u = out.input;
        let (xy, heading) = ego_pose(&ego, &path);
        let mut record = StepRecord {
            step,
            time,
            ego,
            position: [xy.x, xy.y],
            heading,
            input: u,
            v_ref: reference.v_ref[0],
            reference: reference.source,
            stale_plan: reference.stale,
            agents: agents.clone(),
            constraints: out
                .diagnostics
                .constraints
                .iter()
                .map(|c| ConstraintTag { agent: c.agent, kind: c.kind })
                .collect(),
            active: out.diagnostics.active.clone(),
            max_slack: out.diagnostics.max_slack,
            status: out.diagnostics.status,
            fallback: out.diagnostics.fallback,
            iterations: out.diagnostics.iterations,
            kkt_residual: out.diagnostics.kkt_residual,
            gaps: Vec::new(),
        };

        let next = match plant_step(&ego, &u, &path, params, ll.t) {
            Ok(x) => x,
            Err(e) => {
                steps.push(record);
                failure = Some(SimError::Numerical { step, message: e.to_string() }.to_string());
                break;
            }
        };
        for (i, kind) in kinds.iter().enumerate() {
            let w = if scn.noise { streams[i].sample(&sqrt_cov[i]) } else { Vector2::zeros() };
            agents[i] = agent_sim_step(&agents[i], kind, &w, ll.t);
        }
        ego = next;
        let ego_box = ego_rect(&ego, &path, params);
        for (i, kind) in kinds.iter().enumerate() {
            let gap = ego_box.distance(&agent_rect(&agents[i], kind));
            if gap == 0.0 && collision_step.is_none() {
                collision_step = Some(step);
            }
            min_gaps[i] = min_gaps[i].min(gap);
            record.gaps.push(gap);
        }
        steps.push(record);
        u_prev = u;
    }

    let summary = EpisodeSummary {
        scenario: scn.name.clone(),
        seed: scn.seed,
        maneuver_planner: scn.maneuver_planner,
        steps: steps.len(),
        j_sim: score(&steps, &ll.q, &ll.r, &ll.s, hl.v_ref),
        collision: collision_step.is_some(),
        collision_step,
        min_gaps,
        min_speed: steps.iter().map(|s| s.ego.v).fold(f64::INFINITY, f64::min),
        fallback_steps: steps.iter().filter(|s| s.fallback).count(),
        plan_updates: plans.len(),
        failure,
    };
    Ok(EpisodeLog { steps, plans, summary })
}
