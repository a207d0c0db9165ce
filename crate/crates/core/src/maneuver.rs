//! High-level planner: a piecewise-constant speed profile over a long horizon
//! that decides, per crossing agent, whether to pass before or after it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::agents::{point_mass_matrices, predict_mean_with, AgentKind, AgentState};
use crate::ego::{EgoParams, EgoState};
use crate::error::ConfigError;
use crate::geometry::Rect;
use crate::path::{ReferencePath, Vec2};
use crate::qp::{self, QpStatus, QuadraticProgram};
use crate::trajectory::{
    agent_rect, band_distance, ego_pose, same_lane_ahead, AgentSnapshot, LowLevelConfig, ReferenceSource,
    ReferenceTrajectory,
};
use crate::uncertainty::{propagate_covariance, risk_inflation, CovarianceTrajectory};

/// Time resolution used to locate occupancy intervals between samples.
const OCCUPANCY_DT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighLevelConfig {
    pub n_h: usize,
    pub t_h: f64,
    pub r_h: f64,
    pub v_ref: f64,
    pub beta_tv: f64,
    pub beta_ped: f64,
    pub eps_safe_tv: f64,
    pub eps_safe_ped: f64,
    /// Speed limit on turn segments; straights use the vehicle's `v_max`.
    #[serde(default = "default_turn_speed")]
    pub turn_speed_limit: f64,
    #[serde(default = "default_sensing_radius")]
    pub sensing_radius: f64,
}

fn default_turn_speed() -> f64 {
    7.0
}

fn default_sensing_radius() -> f64 {
    150.0
}

impl Default for HighLevelConfig {
    fn default() -> Self {
        HighLevelConfig {
            n_h: 8,
            t_h: 2.0,
            r_h: 0.5,
            v_ref: 10.0,
            beta_tv: 0.4,
            beta_ped: 0.5,
            eps_safe_tv: 4.0,
            eps_safe_ped: 1.0,
            turn_speed_limit: default_turn_speed(),
            sensing_radius: default_sensing_radius(),
        }
    }
}

impl HighLevelConfig {
    pub fn validate(&self, low: &LowLevelConfig, params: &EgoParams) -> Result<(), ConfigError> {
        if self.n_h == 0 || !(self.t_h > 0.0) {
            return Err(ConfigError::Invalid("high-level horizon and period must be positive".into()));
        }
        let ratio = self.t_h / low.t;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(ConfigError::Invalid(format!(
                "high-level period {} is not an integer multiple of {}",
                self.t_h, low.t
            )));
        }
        if (self.n_h as f64) * self.t_h < (low.n as f64) * low.t - 1e-9 {
            return Err(ConfigError::Invalid("high-level horizon is shorter than the low-level horizon".into()));
        }
        risk_inflation(self.beta_tv)?;
        risk_inflation(self.beta_ped)?;
        if !(self.r_h >= 0.0) || !(self.eps_safe_tv >= 0.0) || !(self.eps_safe_ped >= 0.0) {
            return Err(ConfigError::Invalid("high-level weight and margins must be non-negative".into()));
        }
        if !(0.0..=params.v_max).contains(&self.v_ref) {
            return Err(ConfigError::Invalid("cruise speed outside [0, v_max]".into()));
        }
        if !(self.turn_speed_limit > 0.0) {
            return Err(ConfigError::Invalid("turn speed limit must be positive".into()));
        }
        Ok(())
    }

    /// Low-level steps per high-level period.
    pub fn steps_per_update(&self, t: f64) -> usize {
        (self.t_h / t).round() as usize
    }

    /// Speed limit at arc length `s`.
    pub fn speed_limit(&self, s: f64, path: &ReferencePath, params: &EgoParams) -> f64 {
        if path.is_turn_at(s) {
            self.turn_speed_limit.min(params.v_max)
        } else {
            params.v_max
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    InFront,
    Crossing,
}

/// Interaction of one agent with the ego path at the high level.
///
/// For a vehicle ahead in the lane, each step carries the projected agent
/// position and the rows read `s_h + delta1_h ≤ s^a_h`. For a crossing agent,
/// the ego centre must be at most `behind_limit` or at least `ahead_limit`
/// throughout `window`; `s_agent` holds the midpoint of the two limits with
/// `delta1`, `delta2` its distances to them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingConstraintSpec {
    pub agent: usize,
    pub kind: SpecKind,
    pub s_agent: Vec<Option<f64>>,
    pub rho: Vec<f64>,
    pub delta1: Vec<f64>,
    pub delta2: Vec<f64>,
    pub window: Option<(f64, f64)>,
    pub behind_limit: f64,
    pub ahead_limit: f64,
}

/// Per crossing agent: the first step at which the ego is ahead, or `None`
/// when it stays behind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BranchChoice {
    pub agent: usize,
    pub switch_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManeuverPlan {
    pub plan_time: f64,
    pub t_h: f64,
    pub nu: Vec<f64>,
    pub s: Vec<f64>,
    pub pattern: Vec<BranchChoice>,
    pub objective: f64,
    pub degraded: bool,
}

fn interp(values: &[f64], t: f64, dt: f64) -> f64 {
    let x = (t / dt).clamp(0.0, (values.len() - 1) as f64);
    let i = (x.floor() as usize).min(values.len().saturating_sub(2));
    if values.len() == 1 {
        return values[0];
    }
    let f = x - i as f64;
    values[i] * (1.0 - f) + values[i + 1] * f
}

fn interp_state(pred: &[AgentState], t: f64, dt: f64) -> AgentState {
    let pick = |f: fn(&AgentState) -> f64| interp(&pred.iter().map(f).collect::<Vec<_>>(), t, dt);
    AgentState::new(pick(|a| a.x), pick(|a| a.vx), pick(|a| a.y), pick(|a| a.vy))
}

fn high_level_covariance(
    kind: &AgentKind,
    cfg: &HighLevelConfig,
    k_bar: usize,
) -> Result<CovarianceTrajectory, ConfigError> {
    let model = point_mass_matrices(cfg.t_h);
    let gain = match kind {
        AgentKind::Vehicle(c) => Some(c.gain_high.matrix()),
        AgentKind::Pedestrian(_) => None,
    };
    let averaged = kind.noise_matrix() / k_bar as f64;
    Ok(propagate_covariance(&model, gain.as_ref(), &averaged, cfg.n_h)?.with_heading(kind.frame_heading()))
}

/// First and last sampled time at which `occupied` holds, if any.
fn occupancy_window(horizon: f64, occupied: impl Fn(f64) -> bool) -> Option<(f64, f64)> {
    let n = (horizon / OCCUPANCY_DT).round() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * OCCUPANCY_DT).collect();
    let first = times.iter().position(|&t| occupied(t))?;
    let last = times.iter().rposition(|&t| occupied(t))?;
    Some((times[first], times[last]))
}

/// Projects sensed agents onto the ego path with the slow-rate model.
pub fn project_agents_high_level(
    ego: &EgoState,
    agents: &[AgentSnapshot],
    path: &ReferencePath,
    params: &EgoParams,
    cfg: &HighLevelConfig,
    t: f64,
) -> Result<Vec<CrossingConstraintSpec>, ConfigError> {
    let k_bar = ((cfg.t_h / t) + 1e-9).floor().max(1.0) as usize;
    let horizon = cfg.n_h as f64 * cfg.t_h;
    let half = 0.5 * params.l_veh;
    let (ego_xy, _) = ego_pose(ego, path);
    let mut out = Vec::new();
    for agent in agents {
        if (agent.state.position() - ego_xy).norm() > cfg.sensing_radius {
            continue;
        }
        let gain_high = match agent.kind {
            AgentKind::Vehicle(c) => Some(&c.gain_high),
            AgentKind::Pedestrian(_) => None,
        };
        let pred = predict_mean_with(&agent.state, agent.kind, gain_high, cfg.n_h, cfg.t_h);
        let cov = high_level_covariance(agent.kind, cfg, k_bar)?;
        let length = agent.kind.footprint().length;
        match agent.kind {
            AgentKind::Vehicle(tv) => {
                let g = risk_inflation(cfg.beta_tv)?.sqrt();
                if same_lane_ahead(ego.s, &agent.state, agent.kind, path, params.w_lane).is_some() {
                    let mut s_agent = Vec::with_capacity(cfg.n_h + 1);
                    let mut rho = Vec::with_capacity(cfg.n_h + 1);
                    for (h, a) in pred.iter().enumerate() {
                        let pose = path.world_to_curvilinear(&a.position()).ok();
                        let tangent = path.tangent_at(pose.map_or(ego.s, |p| p.s));
                        s_agent.push(pose.map(|p| p.s));
                        rho.push(0.5 * length + cov.sigma_along(h, &tangent) * g + cfg.eps_safe_tv);
                    }
                    let delta: Vec<f64> = rho.iter().map(|r| half + r).collect();
                    out.push(CrossingConstraintSpec {
                        agent: agent.id,
                        kind: SpecKind::InFront,
                        s_agent,
                        rho,
                        delta1: delta.clone(),
                        delta2: delta,
                        window: None,
                        behind_limit: f64::NAN,
                        ahead_limit: f64::NAN,
                    });
                    continue;
                }
                let Some(zone) = path.conflict_zone() else { continue };
                let (s_int, s_exit) = (path.intersection_entry_s(), path.intersection_exit_s());
                if ego.s + half > s_int {
                    continue;
                }
                let zone_rect = Rect::from_zone(zone);
                let (lane_dir, _) = tv.lane_axes();
                let sigma: Vec<f64> = (0..=cfg.n_h).map(|h| cov.sigma_along(h, &lane_dir)).collect();
                let window = occupancy_window(horizon, |time| {
                    let a = interp_state(&pred, time, cfg.t_h);
                    let inflate = interp(&sigma, time, cfg.t_h) * g + cfg.eps_safe_tv;
                    agent_rect(&a, agent.kind).lengthened(inflate).overlaps(&zone_rect)
                });
                let Some(window) = window else { continue };
                let behind = s_int - half;
                let ahead = s_exit + half;
                out.push(crossing_spec(agent.id, behind, ahead, window, &sigma, g, length, cfg.eps_safe_tv, cfg.n_h));
            }
            AgentKind::Pedestrian(ped) => {
                let g = risk_inflation(cfg.beta_ped)?.sqrt();
                let Ok(now) = path.world_to_curvilinear(&agent.state.position()) else { continue };
                if now.s + 0.5 * length < ego.s - half {
                    continue;
                }
                let tangent = path.tangent_at(now.s);
                let normal = Vec2::new(-tangent.y, tangent.x);
                let sigma_s: Vec<f64> = (0..=cfg.n_h).map(|h| cov.sigma_along(h, &tangent)).collect();
                let sigma_d: Vec<f64> = (0..=cfg.n_h).map(|h| cov.sigma_along(h, &normal)).collect();
                let reach = 0.5 * ped.footprint.width + cfg.eps_safe_ped;
                let window = occupancy_window(horizon, |time| {
                    let a = interp_state(&pred, time, cfg.t_h);
                    match path.world_to_curvilinear(&a.position()) {
                        Ok(p) => band_distance(p.d, params) < reach + interp(&sigma_d, time, cfg.t_h) * g,
                        Err(_) => false,
                    }
                });
                let Some((t_in, t_out)) = window else { continue };
                let s_at = |time: f64| {
                    let a = interp_state(&pred, time, cfg.t_h);
                    path.world_to_curvilinear(&a.position()).map_or(now.s, |p| p.s)
                };
                let rho_at = |time: f64| 0.5 * length + interp(&sigma_s, time, cfg.t_h) * g + cfg.eps_safe_ped;
                let behind = s_at(t_out) - rho_at(t_out) - half;
                let ahead = s_at(t_in) + rho_at(t_in) + half;
                out.push(crossing_spec(
                    agent.id,
                    behind,
                    ahead,
                    (t_in, t_out),
                    &sigma_s,
                    g,
                    length,
                    cfg.eps_safe_ped,
                    cfg.n_h,
                ));
            }
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn crossing_spec(
    agent: usize,
    behind: f64,
    ahead: f64,
    window: (f64, f64),
    sigma: &[f64],
    g: f64,
    length: f64,
    eps: f64,
    n_h: usize,
) -> CrossingConstraintSpec {
    let mid = 0.5 * (behind + ahead);
    CrossingConstraintSpec {
        agent,
        kind: SpecKind::Crossing,
        s_agent: vec![Some(mid); n_h + 1],
        rho: sigma.iter().map(|s| 0.5 * length + s * g + eps).collect(),
        delta1: vec![mid - behind; n_h + 1],
        delta2: vec![ahead - mid; n_h + 1],
        window: Some(window),
        behind_limit: behind,
        ahead_limit: ahead,
    }
}

/// Coefficients of `s(t)` in `ν` for the piecewise-linear position profile.
fn position_row(t: f64, t_h: f64, n_h: usize) -> DVector<f64> {
    let mut row = DVector::zeros(n_h);
    let h = ((t / t_h + 1e-9).floor() as usize).min(n_h - 1);
    for j in 0..h {
        row[j] = t_h;
    }
    row[h] = (t - h as f64 * t_h).clamp(0.0, t_h);
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Ahead,
    Behind,
}

struct PatternResult {
    nu: DVector<f64>,
    objective: f64,
}

#[allow(clippy::too_many_arguments)]
fn solve_pattern(
    s0: f64,
    v0: f64,
    specs: &[CrossingConstraintSpec],
    crossing: &[usize],
    branches: &[Branch],
    soften_crossing: bool,
    path: &ReferencePath,
    params: &EgoParams,
    cfg: &HighLevelConfig,
) -> Result<Option<PatternResult>, ConfigError> {
    let n = cfg.n_h;
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    for i in 0..n {
        h[(i, i)] = 2.0 * (1.0 + cfg.r_h);
        if i + 1 < n {
            h[(i, i)] += 2.0;
            h[(i, i + 1)] = -2.0;
            h[(i + 1, i)] = -2.0;
        }
        g[i] = -2.0 * cfg.r_h * cfg.v_ref;
    }
    g[0] -= 2.0 * v0;

    // Limits are looked up at the previous iterate's positions, starting from
    // a constant-speed guess, and only ever tightened; with a piecewise-constant
    // limit map this settles after finitely many passes.
    let mut positions: Vec<f64> = (0..n).map(|i| s0 + i as f64 * cfg.t_h * v0).collect();
    let mut limits: Vec<f64> = vec![f64::INFINITY; n];
    let mut result = None;
    for _pass in 0..(n + 2) {
        let mut changed = false;
        for i in 0..n {
            let l = cfg.speed_limit(positions[i], path, params);
            if l < limits[i] {
                limits[i] = l;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        let mut soft: Vec<bool> = Vec::new();
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            rows.push(e.clone());
            rhs.push(limits[i]);
            soft.push(false);
            rows.push(-e);
            rhs.push(0.0);
            soft.push(false);
        }
        for (ci, &si) in crossing.iter().enumerate() {
            let spec = &specs[si];
            let (t_in, t_out) = spec.window.expect("crossing spec has a window");
            match branches[ci] {
                Branch::Behind => {
                    rows.push(position_row(t_out, cfg.t_h, n));
                    rhs.push(spec.behind_limit - s0);
                }
                Branch::Ahead => {
                    rows.push(-position_row(t_in, cfg.t_h, n));
                    rhs.push(s0 - spec.ahead_limit);
                }
            }
            soft.push(soften_crossing);
        }
        for spec in specs.iter().filter(|s| s.kind == SpecKind::InFront) {
            for step in 1..=n {
                if let Some(sa) = spec.s_agent[step] {
                    rows.push(position_row(step as f64 * cfg.t_h, cfg.t_h, n));
                    rhs.push(sa - spec.delta1[step] - s0);
                    soft.push(true);
                }
            }
        }
        let m = rows.len();
        let mut a = DMatrix::zeros(m, n);
        for (r, row) in rows.iter().enumerate() {
            a.row_mut(r).copy_from(&row.transpose());
        }
        let program =
            QuadraticProgram::new(h.clone(), g.clone()).with_inequalities(a, DVector::from_vec(rhs)).with_soft(soft);
        let sol = qp::solve(&program)?;
        if sol.status != QpStatus::Optimal {
            return Ok(None);
        }
        // constant term so the objective equals the cost as written
        let constant = v0 * v0 + cfg.r_h * cfg.v_ref * cfg.v_ref * n as f64;
        positions = (0..n).map(|i| s0 + cfg.t_h * sol.z.iter().take(i).sum::<f64>()).collect();
        result = Some(PatternResult { nu: sol.z.map(|x| x.max(0.0)), objective: sol.objective + constant });
    }
    Ok(result)
}

/// High-level cost `Σ (ν_h − ν_{h−1})² + r_H (ν_h − v_ref)²` with `ν_{−1} = v0`.
pub fn plan_cost(nu: &[f64], v0: f64, cfg: &HighLevelConfig) -> f64 {
    let mut prev = v0;
    let mut j = 0.0;
    for &v in nu {
        j += (v - prev).powi(2) + cfg.r_h * (v - cfg.v_ref).powi(2);
        prev = v;
    }
    j
}

/// Solves one convex program per branch pattern and returns the best plan.
pub fn enumerate_and_solve(
    s0: f64,
    v0: f64,
    plan_time: f64,
    specs: &[CrossingConstraintSpec],
    path: &ReferencePath,
    params: &EgoParams,
    cfg: &HighLevelConfig,
) -> Result<ManeuverPlan, ConfigError> {
    let crossing: Vec<usize> =
        specs.iter().enumerate().filter(|(_, s)| s.kind == SpecKind::Crossing).map(|(i, _)| i).collect();
    let switch_step = |spec: &CrossingConstraintSpec, b: Branch| match b {
        Branch::Behind => None,
        Branch::Ahead => {
            let t_in = spec.window.map_or(0.0, |w| w.0);
            Some(((t_in / cfg.t_h) - 1e-9).ceil().max(0.0) as usize)
        }
    };
    let rank = |s: Option<usize>| s.unwrap_or(cfg.n_h + 1);

    let mut best: Option<(Vec<Branch>, PatternResult)> = None;
    for mask in 0..(1usize << crossing.len()) {
        // bit set = ahead; enumerated from all-behind upward
        let branches: Vec<Branch> =
            (0..crossing.len()).map(|i| if mask >> i & 1 == 1 { Branch::Ahead } else { Branch::Behind }).collect();
        let Some(res) = solve_pattern(s0, v0, specs, &crossing, &branches, false, path, params, cfg)? else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((bb, br)) => {
                if res.objective < br.objective - 1e-9 {
                    true
                } else if res.objective > br.objective + 1e-9 {
                    false
                } else {
                    let key = |b: &[Branch]| -> (usize, Vec<usize>) {
                        let steps: Vec<usize> =
                            b.iter().zip(&crossing).map(|(x, &i)| rank(switch_step(&specs[i], *x))).collect();
                        (steps.iter().sum(), steps)
                    };
                    let (sa, la) = key(&branches);
                    let (sb, lb) = key(bb);
                    sa > sb || (sa == sb && la > lb)
                }
            }
        };
        if better {
            best = Some((branches, res));
        }
    }
    let (branches, res, degraded) = match best {
        Some((b, r)) => (b, r, false),
        None => {
            let b = vec![Branch::Behind; crossing.len()];
            let r = solve_pattern(s0, v0, specs, &crossing, &b, true, path, params, cfg)?
                .ok_or_else(|| ConfigError::Invalid("softened high-level program has no solution".into()))?;
            (b, r, true)
        }
    };
    let nu: Vec<f64> = res.nu.iter().copied().collect();
    let mut s = Vec::with_capacity(cfg.n_h + 1);
    let mut acc = s0;
    s.push(acc);
    for v in &nu {
        acc += v * cfg.t_h;
        s.push(acc);
    }
    let pattern = branches
        .iter()
        .zip(&crossing)
        .map(|(b, &i)| BranchChoice { agent: specs[i].agent, switch_step: switch_step(&specs[i], *b) })
        .collect();
    Ok(ManeuverPlan { plan_time, t_h: cfg.t_h, objective: plan_cost(&nu, v0, cfg), nu, s, pattern, degraded })
}

/// Zero-order hold of the planned speeds onto the low-level grid. A plan
/// older than one period plus one step is held at its last value and flagged.
pub fn reference_for_low_level(plan: &ManeuverPlan, now: f64, ego_s: f64, t: f64, n: usize) -> ReferenceTrajectory {
    let last = plan.nu.len() - 1;
    let v_ref = (0..=n)
        .map(|k| {
            let idx = ((now + k as f64 * t - plan.plan_time) / plan.t_h + 1e-9).floor().max(0.0) as usize;
            plan.nu[idx.min(last)]
        })
        .collect();
    let mut r = ReferenceTrajectory::from_speeds(ego_s, v_ref, t, ReferenceSource::ManeuverPlanner);
    r.stale = now - plan.plan_time > plan.t_h + t + 1e-9;
    r
}

/// `(s − s^a + Δ₁)(−s + s^a + Δ₂)` for a crossing spec at step `h`.
pub fn crossing_product(spec: &CrossingConstraintSpec, s: f64, h: usize) -> Option<f64> {
    let sa = spec.s_agent[h]?;
    Some((s - sa + spec.delta1[h]) * (-s + sa + spec.delta2[h]))
}
