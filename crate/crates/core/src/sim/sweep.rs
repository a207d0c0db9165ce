//! Monte Carlo batches over seeds and risk levels.

use rayon::prelude::*;
use serde::Serialize;

use crate::agents::{point_mass_matrices, AgentKind};
use crate::error::SimError;
use crate::sim::episode::run_episode;
use crate::sim::scenario::Scenario;
use crate::uncertainty::empirical_containment;

/// Optional overrides applied to every run of a sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Variation {
    pub beta_tv: Option<f64>,
    pub beta_ped: Option<f64>,
}

impl Variation {
    pub fn apply(&self, scn: &Scenario) -> Scenario {
        let mut s = scn.clone();
        if let Some(b) = self.beta_tv {
            s.low_level.beta_tv = b;
        }
        if let Some(b) = self.beta_ped {
            s.low_level.beta_ped = b;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub j_sim: f64,
    pub collision: bool,
    pub min_gaps: Vec<f64>,
    pub min_speed: f64,
    pub fallback_steps: usize,
    pub non_optimal_steps: usize,
    pub max_kkt_residual: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub agent: String,
    pub level: String,
    pub beta: f64,
    /// Smallest per-step containment fraction over the horizon.
    pub min_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub variation: Variation,
    pub runs: Vec<SeedResult>,
    pub collision_frequency: f64,
    /// Per agent, mean over seeds of the episode's minimum gap.
    pub mean_min_gap: Vec<f64>,
    pub min_min_gap: Vec<f64>,
    pub j_mean: f64,
    pub j_std: f64,
    pub j_min: f64,
    pub j_max: f64,
    pub containment: Vec<ContainmentReport>,
}

/// Empirical containment of the tightening used by each agent, at both
/// planning rates.
pub fn containment_report(scn: &Scenario, trials: usize, seed: u64) -> Result<Vec<ContainmentReport>, SimError> {
    let ll = &scn.low_level;
    let hl = &scn.high_level;
    let k_bar = hl.steps_per_update(ll.t) as f64;
    let mut out = Vec::new();
    for a in &scn.agents {
        let (gain, gain_high, beta, beta_high) = match &a.model {
            AgentKind::Vehicle(c) => (Some(c.gain.matrix()), Some(c.gain_high.matrix()), ll.beta_tv, hl.beta_tv),
            AgentKind::Pedestrian(_) => (None, None, ll.beta_ped, hl.beta_ped),
        };
        let cov = a.model.noise_matrix();
        let low = empirical_containment(&point_mass_matrices(ll.t), gain.as_ref(), &cov, beta, ll.n, trials, seed)?;
        let high = empirical_containment(
            &point_mass_matrices(hl.t_h),
            gain_high.as_ref(),
            &(cov / k_bar),
            beta_high,
            hl.n_h,
            trials,
            seed,
        )?;
        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        out.push(ContainmentReport { agent: a.name.clone(), level: "low".into(), beta, min_fraction: min(&low) });
        out.push(ContainmentReport {
            agent: a.name.clone(),
            level: "high".into(),
            beta: beta_high,
            min_fraction: min(&high),
        });
    }
    Ok(out)
}

fn stats(xs: &[f64]) -> (f64, f64, f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (mean, var.sqrt(), min, max)
}

/// Runs the scenario once per seed, in parallel; results keep seed order.
pub fn sweep(
    scn: &Scenario,
    seeds: &[u64],
    variation: Variation,
    containment_trials: usize,
) -> Result<SweepSummary, SimError> {
    if seeds.is_empty() {
        return Err(SimError::Config(crate::error::ConfigError::Invalid("sweep needs at least one seed".into())));
    }
    let base = variation.apply(scn);
    base.build()?;
    let runs: Vec<SeedResult> = seeds
        .par_iter()
        .map(|&seed| {
            let mut s = base.clone();
            s.seed = seed;
            let log = run_episode(&s)?;
            Ok(SeedResult {
                seed,
                j_sim: log.summary.j_sim,
                collision: log.summary.collision,
                min_gaps: log.summary.min_gaps.clone(),
                min_speed: log.summary.min_speed,
                fallback_steps: log.summary.fallback_steps,
                non_optimal_steps: log.steps.iter().filter(|r| r.status != crate::qp::QpStatus::Optimal).count(),
                max_kkt_residual: log
                    .steps
                    .iter()
                    .filter(|r| r.status == crate::qp::QpStatus::Optimal)
                    .map(|r| r.kkt_residual)
                    .fold(0.0, f64::max),
                failure: log.summary.failure.clone(),
            })
        })
        .collect::<Result<_, SimError>>()?;
    let n_agents = base.agents.len();
    let collision_frequency = runs.iter().filter(|r| r.collision).count() as f64 / runs.len() as f64;
    let per_agent = |i: usize| runs.iter().map(|r| r.min_gaps[i]).collect::<Vec<f64>>();
    let mean_min_gap = (0..n_agents).map(|i| stats(&per_agent(i)).0).collect();
    let min_min_gap = (0..n_agents).map(|i| stats(&per_agent(i)).2).collect();
    let js: Vec<f64> = runs.iter().map(|r| r.j_sim).collect();
    let (j_mean, j_std, j_min, j_max) = stats(&js);
    let containment =
        if containment_trials > 0 { containment_report(&base, containment_trials, seeds[0])? } else { Vec::new() };
    Ok(SweepSummary {
        variation,
        runs,
        collision_frequency,
        mean_min_gap,
        min_min_gap,
        j_mean,
        j_std,
        j_min,
        j_max,
        containment,
    })
}
