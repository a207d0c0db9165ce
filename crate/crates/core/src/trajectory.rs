//! Low-level planner: a condensed quadratic program over the next `N` inputs,
//! with positional constraints against surrounding agents tightened by their
//! prediction uncertainty.

use nalgebra::{DMatrix, DVector, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::agents::{point_mass_matrices, predict_mean, AgentKind, AgentState};
use crate::ego::{prediction_model, EgoInput, EgoParams, EgoState, LinearDiscreteModel};
use crate::error::ConfigError;
use crate::geometry::Rect;
use crate::path::{CurvilinearPose, ReferencePath, Vec2};
use crate::qp::{self, QpStatus, QuadraticProgram};
use crate::uncertainty::{propagate_covariance, risk_inflation, safety_envelope, CovarianceTrajectory};

/// Low-level horizon, weights and risk settings. Weights are diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowLevelConfig {
    pub n: usize,
    pub t: f64,
    pub q: [f64; 4],
    pub r: [f64; 2],
    pub s: [f64; 2],
    pub p: [f64; 4],
    pub beta_tv: f64,
    pub beta_ped: f64,
    pub eps_safe_tv: f64,
    pub eps_safe_ped: f64,
    /// Agents farther than this from the ego are ignored.
    #[serde(default = "default_sensing_radius")]
    pub sensing_radius: f64,
    /// Longest look-ahead in seconds for intersection occupancy.
    #[serde(default = "default_occupancy_horizon")]
    pub occupancy_horizon: f64,
    /// Evaluate the path curvature at each predicted step instead of only at
    /// the current position.
    #[serde(default = "default_curvature_preview")]
    pub curvature_preview: bool,
}

fn default_curvature_preview() -> bool {
    true
}

fn default_sensing_radius() -> f64 {
    150.0
}

fn default_occupancy_horizon() -> f64 {
    10.0
}

impl Default for LowLevelConfig {
    fn default() -> Self {
        LowLevelConfig {
            n: 10,
            t: 0.2,
            q: [0.0, 1.0, 1.0, 1.0],
            r: [0.33, 5.0],
            s: [0.33, 15.0],
            p: [0.0, 1.0, 1.0, 1.0],
            beta_tv: 0.8,
            beta_ped: 0.9,
            eps_safe_tv: 4.0,
            eps_safe_ped: 1.0,
            sensing_radius: default_sensing_radius(),
            occupancy_horizon: default_occupancy_horizon(),
            curvature_preview: default_curvature_preview(),
        }
    }
}

impl LowLevelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::Invalid("low-level horizon must be at least one step".into()));
        }
        if !(self.t > 0.0) {
            return Err(ConfigError::Invalid("low-level sampling time must be positive".into()));
        }
        let weights = self.q.iter().chain(&self.r).chain(&self.s).chain(&self.p);
        if weights.clone().any(|w| !w.is_finite()) {
            return Err(ConfigError::Invalid("weights must be finite".into()));
        }
        if weights.clone().any(|w| *w < 0.0) {
            return Err(ConfigError::NotPsd("low-level weight with a negative diagonal entry".into()));
        }
        risk_inflation(self.beta_tv)?;
        risk_inflation(self.beta_ped)?;
        if !(self.eps_safe_tv >= 0.0 && self.eps_safe_ped >= 0.0) {
            return Err(ConfigError::Invalid("safety margins must be non-negative".into()));
        }
        if !(self.sensing_radius > 0.0) || !(self.occupancy_horizon >= 0.0) {
            return Err(ConfigError::Invalid("sensing radius and occupancy horizon must be positive".into()));
        }
        Ok(())
    }
}

/// An agent as seen by the planners at one instant.
#[derive(Debug, Clone, Copy)]
pub struct AgentSnapshot<'a> {
    pub id: usize,
    pub kind: &'a AgentKind,
    pub state: AgentState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    TvSameLane,
    TvIntersection,
    Pedestrian,
}

/// `q_s s_k + q_d d_k + q_t ≤ 0` at prediction step `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub k: usize,
    pub q_s: f64,
    pub q_d: f64,
    pub q_t: f64,
}

/// All rows generated for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionalConstraint {
    pub agent: usize,
    pub kind: ConstraintKind,
    pub soft: bool,
    pub rows: Vec<ConstraintRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    StaticCruise,
    ManeuverPlanner,
}

/// Per-step reference `[s_ref, 0, 0, v_ref]` for steps `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub s_ref: Vec<f64>,
    pub v_ref: Vec<f64>,
    pub source: ReferenceSource,
    /// Set when the reference was held from an outdated plan.
    #[serde(default)]
    pub stale: bool,
}

impl ReferenceTrajectory {
    /// Reference from per-step speeds; `s_ref` integrates them from `s0`.
    pub fn from_speeds(s0: f64, v_ref: Vec<f64>, t: f64, source: ReferenceSource) -> Self {
        let mut s_ref = Vec::with_capacity(v_ref.len());
        let mut s = s0;
        for v in &v_ref {
            s_ref.push(s);
            s += v * t;
        }
        ReferenceTrajectory { s_ref, v_ref, source, stale: false }
    }

    /// Constant cruise speed over `n` steps.
    pub fn cruise(s0: f64, v: f64, n: usize, t: f64) -> Self {
        Self::from_speeds(s0, vec![v; n + 1], t, ReferenceSource::StaticCruise)
    }

    pub fn state(&self, k: usize) -> Vector4<f64> {
        Vector4::new(self.s_ref[k], 0.0, 0.0, self.v_ref[k])
    }

    pub fn len(&self) -> usize {
        self.v_ref.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_ref.is_empty()
    }
}

/// World position and heading of the ego vehicle.
pub fn ego_pose(ego: &EgoState, path: &ReferencePath) -> (Vec2, f64) {
    let (p, t) = (path.point_at(ego.s), path.tangent_at(ego.s));
    let normal = Vec2::new(-t.y, t.x);
    (p + normal * ego.d, t.y.atan2(t.x) + ego.phi)
}

/// Ego footprint in the world.
pub fn ego_rect(ego: &EgoState, path: &ReferencePath, params: &EgoParams) -> Rect {
    let (c, h) = ego_pose(ego, path);
    Rect::new(c, h, params.l_veh, params.w_veh)
}

/// Footprint of an agent, oriented along its lane for vehicles and
/// axis-aligned for pedestrians.
pub fn agent_rect(state: &AgentState, kind: &AgentKind) -> Rect {
    let f = kind.footprint();
    Rect::new(state.position(), kind.frame_heading(), f.length, f.width)
}

/// Projection of a vehicle that drives ahead of the ego in its lane and
/// direction.
pub fn same_lane_ahead(
    ego_s: f64,
    state: &AgentState,
    kind: &AgentKind,
    path: &ReferencePath,
    w_lane: f64,
) -> Option<CurvilinearPose> {
    let AgentKind::Vehicle(cfg) = kind else { return None };
    let pose = path.world_to_curvilinear(&state.position()).ok()?;
    let (lane_dir, _) = cfg.lane_axes();
    let aligned = lane_dir.dot(&path.tangent_at(pose.s)) > std::f64::consts::FRAC_1_SQRT_2;
    (pose.d.abs() < 0.5 * w_lane && aligned && pose.s > ego_s).then_some(pose)
}

/// Time to cover `distance` from speed `v` accelerating at `a_max` up to `v_max`.
pub fn earliest_arrival(distance: f64, v: f64, a_max: f64, v_max: f64) -> f64 {
    if distance <= 0.0 {
        return 0.0;
    }
    let v = v.clamp(0.0, v_max);
    if a_max <= 0.0 {
        return if v > 0.0 { distance / v } else { f64::INFINITY };
    }
    let t_ramp = (v_max - v) / a_max;
    let d_ramp = 0.5 * (v + v_max) * t_ramp;
    if distance <= d_ramp {
        (-v + (v * v + 2.0 * a_max * distance).sqrt()) / a_max
    } else {
        t_ramp + (distance - d_ramp) / v_max
    }
}

fn within_sensing(ego_xy: &Vec2, state: &AgentState, radius: f64) -> bool {
    (state.position() - ego_xy).norm() <= radius
}

fn agent_covariance(kind: &AgentKind, t: f64, n: usize) -> Result<CovarianceTrajectory, ConfigError> {
    let model = point_mass_matrices(t);
    let gain = match kind {
        AgentKind::Vehicle(c) => Some(c.gain.matrix()),
        AgentKind::Pedestrian(_) => None,
    };
    Ok(propagate_covariance(&model, gain.as_ref(), &kind.noise_matrix(), n)?.with_heading(kind.frame_heading()))
}

/// Rows `s_k + l/2 ≤ s^a_k − a_k` behind an agent whose predicted positions
/// project onto the path; steps without a projection are skipped.
#[allow(clippy::too_many_arguments)]
fn behind_rows(
    ego: &EgoState,
    pred: &[AgentState],
    cov: &CovarianceTrajectory,
    agent_length: f64,
    beta: f64,
    eps_safe: f64,
    path: &ReferencePath,
    params: &EgoParams,
    n: usize,
) -> Result<Vec<ConstraintRow>, ConfigError> {
    let poses: Vec<Option<CurvilinearPose>> =
        pred.iter().map(|a| path.world_to_curvilinear(&a.position()).ok()).collect();
    let mut sigma = Vec::with_capacity(n + 1);
    let mut speed = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let s_ref = poses[k].map_or(ego.s, |p| p.s);
        let tangent = path.tangent_at(s_ref);
        sigma.push(cov.sigma_along(k, &tangent));
        speed.push(pred[k].velocity().dot(&tangent));
    }
    let env = safety_envelope(&sigma, agent_length, beta, eps_safe, ego.v, &speed, -params.u_min[0])?;
    Ok((1..=n)
        .filter_map(|k| {
            poses[k].map(|p| ConstraintRow { k, q_s: 1.0, q_d: 0.0, q_t: 0.5 * params.l_veh - p.s + env.a[k] })
        })
        .collect())
}

/// Positional constraints for all sensed agents, computed from the current
/// snapshot only.
pub fn generate_constraints(
    ego: &EgoState,
    agents: &[AgentSnapshot],
    path: &ReferencePath,
    params: &EgoParams,
    cfg: &LowLevelConfig,
) -> Result<Vec<PositionalConstraint>, ConfigError> {
    let n = cfg.n;
    let (ego_xy, _) = ego_pose(ego, path);
    let mut out = Vec::new();
    for agent in agents {
        if !within_sensing(&ego_xy, &agent.state, cfg.sensing_radius) {
            continue;
        }
        let length = agent.kind.footprint().length;
        match agent.kind {
            AgentKind::Vehicle(tv) => {
                if same_lane_ahead(ego.s, &agent.state, agent.kind, path, params.w_lane).is_some() {
                    let pred = predict_mean(&agent.state, agent.kind, n, cfg.t);
                    let cov = agent_covariance(agent.kind, cfg.t, n)?;
                    let rows = behind_rows(ego, &pred, &cov, length, cfg.beta_tv, cfg.eps_safe_tv, path, params, n)?;
                    out.push(PositionalConstraint {
                        agent: agent.id,
                        kind: ConstraintKind::TvSameLane,
                        soft: true,
                        rows,
                    });
                    continue;
                }
                let Some(zone) = path.conflict_zone() else { continue };
                let s_int = path.intersection_entry_s();
                if ego.s + 0.5 * params.l_veh > s_int {
                    // already committed to the crossing
                    continue;
                }
                let exit = earliest_arrival(
                    path.intersection_exit_s() + 0.5 * params.l_veh - ego.s,
                    ego.v,
                    params.u_max[0],
                    params.v_max,
                );
                let steps = ((exit.min(cfg.occupancy_horizon) / cfg.t).ceil() as usize).max(n);
                let pred = predict_mean(&agent.state, agent.kind, steps, cfg.t);
                let cov = agent_covariance(agent.kind, cfg.t, steps)?;
                let g = risk_inflation(cfg.beta_tv)?.sqrt();
                let zone_rect = Rect::from_zone(zone);
                let (lane_dir, _) = tv.lane_axes();
                let first_in = (0..=steps).find(|&k| {
                    let inflate = cov.sigma_along(k, &lane_dir) * g + cfg.eps_safe_tv;
                    agent_rect(&pred[k], agent.kind).lengthened(inflate).overlaps(&zone_rect)
                });
                if let Some(k_in) = first_in {
                    if k_in as f64 * cfg.t <= exit {
                        let rows = (1..=n)
                            .map(|k| ConstraintRow { k, q_s: 1.0, q_d: 0.0, q_t: 0.5 * params.l_veh - s_int })
                            .collect();
                        out.push(PositionalConstraint {
                            agent: agent.id,
                            kind: ConstraintKind::TvIntersection,
                            soft: true,
                            rows,
                        });
                    }
                }
            }
            AgentKind::Pedestrian(ped) => {
                let pred = predict_mean(&agent.state, agent.kind, n, cfg.t);
                let poses: Vec<Option<CurvilinearPose>> =
                    pred.iter().map(|a| path.world_to_curvilinear(&a.position()).ok()).collect();
                let Some(now) = poses[0] else { continue };
                if now.s <= ego.s {
                    continue;
                }
                let reach = 0.5 * ped.footprint.width;
                let on_road = band_distance(now.d, params) < reach;
                let enters = poses.iter().flatten().any(|p| band_distance(p.d, params) < reach);
                if !(on_road || enters) {
                    continue;
                }
                let cov = agent_covariance(agent.kind, cfg.t, n)?;
                let rows = behind_rows(ego, &pred, &cov, length, cfg.beta_ped, cfg.eps_safe_ped, path, params, n)?;
                out.push(PositionalConstraint { agent: agent.id, kind: ConstraintKind::Pedestrian, soft: true, rows });
            }
        }
    }
    Ok(out)
}

/// Lateral extent of the road in ego-lane coordinates: the ego lane and the
/// oncoming lane to its left.
pub fn road_band(params: &EgoParams) -> (f64, f64) {
    (-0.5 * params.w_lane, 1.5 * params.w_lane)
}

/// Distance from lateral offset `d` to the road band, zero inside it.
pub fn band_distance(d: f64, params: &EgoParams) -> f64 {
    let (lo, hi) = road_band(params);
    (lo - d).max(d - hi).max(0.0)
}

/// Affine prediction `ξ_k = f_k + G_k U` over the stacked inputs `U`.
#[derive(Debug, Clone)]
pub struct Condensed {
    pub f: Vec<Vector4<f64>>,
    pub g: Vec<DMatrix<f64>>,
}

impl Condensed {
    /// `models` holds one model reused for every step, or one per step.
    pub fn new(models: &[LinearDiscreteModel], xi0: &Vector4<f64>, n: usize) -> Self {
        assert!(models.len() == 1 || models.len() == n, "need one model or one per step");
        let mut f = Vec::with_capacity(n + 1);
        let mut g = Vec::with_capacity(n + 1);
        f.push(*xi0);
        g.push(DMatrix::zeros(4, 2 * n));
        for k in 0..n {
            let model = &models[k.min(models.len() - 1)];
            let a = DMatrix::from_column_slice(4, 4, model.a_d.as_slice());
            f.push(model.offset + model.a_d * f[k]);
            let mut next = &a * &g[k];
            for r in 0..4 {
                for c in 0..2 {
                    next[(r, 2 * k + c)] += model.b_d[(r, c)];
                }
            }
            g.push(next);
        }
        Condensed { f, g }
    }

    pub fn predict(&self, u: &DVector<f64>) -> Vec<EgoState> {
        self.f
            .iter()
            .zip(&self.g)
            .map(|(f, g)| {
                let x = g * u;
                EgoState::new(f[0] + x[0], f[1] + x[1], f[2] + x[2], f[3] + x[3])
            })
            .collect()
    }
}

/// Where each soft row of the program came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowOrigin {
    pub agent: usize,
    pub kind: ConstraintKind,
    pub k: usize,
}

/// The condensed program plus the bookkeeping needed to read its solution.
#[derive(Debug, Clone)]
pub struct Ocp {
    pub qp: QuadraticProgram,
    pub condensed: Condensed,
    /// Index of the first positional row among the inequalities.
    pub positional_offset: usize,
    pub origins: Vec<RowOrigin>,
}

fn quad_form(g: &DMatrix<f64>, w: &[f64; 4]) -> DMatrix<f64> {
    let mut wg = g.clone();
    for (r, wr) in w.iter().enumerate() {
        wg.row_mut(r).scale_mut(*wr);
    }
    g.transpose() * wg
}

/// Builds the condensed quadratic program over `u_0..u_{N-1}`.
pub fn build_ocp(
    ego: &EgoState,
    u_prev: &EgoInput,
    models: &[LinearDiscreteModel],
    reference: &ReferenceTrajectory,
    constraints: &[PositionalConstraint],
    params: &EgoParams,
    cfg: &LowLevelConfig,
) -> Result<Ocp, ConfigError> {
    let n = cfg.n;
    if reference.len() != n + 1 {
        return Err(ConfigError::Dimension(format!(
            "reference has {} steps, horizon needs {}",
            reference.len(),
            n + 1
        )));
    }
    if models.len() != 1 && models.len() != n {
        return Err(ConfigError::Dimension(format!("{} prediction models for {n} steps", models.len())));
    }
    if models.iter().any(|m| (m.t - cfg.t).abs() > 1e-12) {
        return Err(ConfigError::Dimension("model sampling time differs from the planner's".into()));
    }
    let nu = 2 * n;
    let cond = Condensed::new(models, &ego.to_vector(), n);
    let mut h = DMatrix::zeros(nu, nu);
    let mut g = DVector::zeros(nu);

    // tracking terms for k = 1..N; the k = 0 term is constant
    for k in 1..=n {
        let w = if k == n { &cfg.p } else { &cfg.q };
        let gk = &cond.g[k];
        h += quad_form(gk, w) * 2.0;
        let e = cond.f[k] - reference.state(k);
        let we = Vector4::new(w[0] * e[0], w[1] * e[1], w[2] * e[2], w[3] * e[3]);
        g += gk.transpose() * DVector::from_column_slice(we.as_slice()) * 2.0;
    }
    // input magnitude and input rate, with Δu_0 = u_0 - u_{-1}
    let up = u_prev.to_vector();
    for k in 0..n {
        for c in 0..2 {
            let i = 2 * k + c;
            h[(i, i)] += 2.0 * cfg.r[c] + 2.0 * cfg.s[c];
            if k + 1 < n {
                h[(i, i)] += 2.0 * cfg.s[c];
                h[(i, i + 2)] -= 2.0 * cfg.s[c];
                h[(i + 2, i)] -= 2.0 * cfg.s[c];
            }
        }
    }
    g[0] -= 2.0 * cfg.s[0] * up[0];
    g[1] -= 2.0 * cfg.s[1] * up[1];
    h = (&h + h.transpose()) * 0.5;

    let positional: usize = constraints.iter().map(|c| c.rows.len()).sum();
    let hard = 4 * nu + 4 * n;
    let m = hard + positional;
    let mut a = DMatrix::zeros(m, nu);
    let mut b = DVector::zeros(m);
    let mut row = 0;
    for i in 0..nu {
        let c = i % 2;
        a[(row, i)] = 1.0;
        b[row] = params.u_max[c];
        a[(row + 1, i)] = -1.0;
        b[row + 1] = -params.u_min[c];
        row += 2;
    }
    for i in 0..nu {
        let c = i % 2;
        let prev = if i >= 2 { 0.0 } else { up[c] };
        a[(row, i)] = 1.0;
        a[(row + 1, i)] = -1.0;
        if i >= 2 {
            a[(row, i - 2)] = -1.0;
            a[(row + 1, i - 2)] = 1.0;
        }
        b[row] = params.du_max[c] + prev;
        b[row + 1] = -params.du_min[c] - prev;
        row += 2;
    }
    let lat = params.lateral_bound();
    for k in 1..=n {
        let (f, gk) = (&cond.f[k], &cond.g[k]);
        for (idx, lo, hi) in [(1, -lat, lat), (3, 0.0, params.v_max)] {
            a.row_mut(row).copy_from(&gk.row(idx));
            b[row] = hi - f[idx];
            a.row_mut(row + 1).copy_from(&(-gk.row(idx)));
            b[row + 1] = f[idx] - lo;
            row += 2;
        }
    }
    debug_assert_eq!(row, hard);
    let mut soft = vec![false; m];
    let mut origins = Vec::with_capacity(positional);
    for c in constraints {
        for r in &c.rows {
            if r.k == 0 || r.k > n || ![r.q_s, r.q_d, r.q_t].iter().all(|x| x.is_finite()) {
                return Err(ConfigError::Dimension(format!("positional row at step {} is invalid", r.k)));
            }
            let (f, gk) = (&cond.f[r.k], &cond.g[r.k]);
            let coeff = gk.row(0) * r.q_s + gk.row(1) * r.q_d;
            a.row_mut(row).copy_from(&coeff);
            b[row] = -r.q_t - r.q_s * f[0] - r.q_d * f[1];
            soft[row] = c.soft;
            origins.push(RowOrigin { agent: c.agent, kind: c.kind, k: r.k });
            row += 1;
        }
    }
    let program = QuadraticProgram::new(h, g).with_inequalities(a, b).with_soft(soft);
    Ok(Ocp { qp: program, condensed: cond, positional_offset: hard, origins })
}

/// Prediction models linearized at the current state. With curvature
/// preview, step `k` uses the curvature at `s_0 + k T v_0`; otherwise a single
/// model with `κ(s_0)` serves every step.
pub fn prediction_models(
    ego: &EgoState,
    path: &ReferencePath,
    params: &EgoParams,
    cfg: &LowLevelConfig,
) -> Result<Vec<LinearDiscreteModel>, ConfigError> {
    if !cfg.curvature_preview {
        return Ok(vec![prediction_model(ego, path.curvature_clamped(ego.s), params, cfg.t)?]);
    }
    (0..cfg.n)
        .map(|k| {
            let s = ego.s + k as f64 * cfg.t * ego.v.max(0.0);
            Ok(prediction_model(ego, path.curvature_clamped(s), params, cfg.t)?)
        })
        .collect()
}

/// Solver outcome and what the planner saw, for logging.
#[derive(Debug, Clone, Serialize)]
pub struct ControlDiagnostics {
    pub status: QpStatus,
    pub fallback: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub max_slack: f64,
    pub active: Vec<RowOrigin>,
    pub constraints: Vec<PositionalConstraint>,
    pub predicted: Vec<EgoState>,
}

#[derive(Debug, Clone)]
pub struct ControlOutput {
    pub input: EgoInput,
    pub diagnostics: ControlDiagnostics,
    pub ocp: Ocp,
}

/// One receding-horizon step: linearize, predict agents, build and solve
/// the program, and return the saturated first input. When the solver does
/// not reach an optimum, full braking with zero steering is returned and
/// the fallback flag is set.
pub fn control_step(
    ego: &EgoState,
    u_prev: &EgoInput,
    path: &ReferencePath,
    agents: &[AgentSnapshot],
    reference: &ReferenceTrajectory,
    params: &EgoParams,
    cfg: &LowLevelConfig,
) -> Result<ControlOutput, ConfigError> {
    let models = prediction_models(ego, path, params, cfg)?;
    let constraints = generate_constraints(ego, agents, path, params, cfg)?;
    let ocp = build_ocp(ego, u_prev, &models, reference, &constraints, params, cfg)?;
    let sol = qp::solve(&ocp.qp)?;
    let fallback = sol.status != QpStatus::Optimal;
    let input = if fallback {
        EgoInput::new(params.u_min[0], 0.0)
    } else {
        EgoInput::new(sol.z[0], sol.z[1]).saturate(&params.u_min, &params.u_max)
    };
    let max_slack = sol.slack.iter().cloned().fold(0.0, f64::max);
    let active = sol
        .active
        .iter()
        .filter(|&&i| i >= ocp.positional_offset)
        .map(|&i| ocp.origins[i - ocp.positional_offset])
        .collect();
    let predicted = if fallback { Vec::new() } else { ocp.condensed.predict(&sol.z) };
    let diagnostics = ControlDiagnostics {
        status: sol.status,
        fallback,
        iterations: sol.iterations,
        kkt_residual: sol.residuals.max(),
        objective: sol.objective,
        max_slack,
        active,
        constraints,
        predicted,
    };
    Ok(ControlOutput { input, diagnostics, ocp })
}

/// Stage cost `‖Δξ‖²_Q + ‖u‖²_R + ‖Δu‖²_S` with diagonal weights.
pub fn stage_cost(
    dxi: &Vector4<f64>,
    u: &Vector2<f64>,
    du: &Vector2<f64>,
    q: &[f64; 4],
    r: &[f64; 2],
    s: &[f64; 2],
) -> f64 {
    let wq = Matrix4::from_diagonal(&Vector4::from_column_slice(q));
    (dxi.transpose() * wq * dxi)[(0, 0)]
        + r[0] * u[0] * u[0]
        + r[1] * u[1] * u[1]
        + s[0] * du[0] * du[0]
        + s[1] * du[1] * du[1]
}
