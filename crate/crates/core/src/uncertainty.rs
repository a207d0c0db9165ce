//! Prediction-error covariance and the safety distances derived from it.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector4};
use serde::Serialize;

use crate::agents::PointMassModel;
use crate::error::ConfigError;
use crate::noise::{check_psd, psd_sqrt, GaussianStream};
use crate::path::Vec2;

/// Error covariance per prediction step, expressed in the agent's own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTrajectory {
    pub steps: Vec<Matrix4<f64>>,
    /// World heading of the frame's first axis (lane direction for vehicles,
    /// zero for pedestrians).
    pub frame_heading: f64,
}

impl CovarianceTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Standard deviation of the first position coordinate.
    pub fn sigma_s(&self, k: usize) -> f64 {
        self.steps[k][(0, 0)].max(0.0).sqrt()
    }

    /// Standard deviation of the position projected on a world direction.
    pub fn sigma_along(&self, k: usize, dir: &Vec2) -> f64 {
        let (sn, c) = self.frame_heading.sin_cos();
        // direction in the agent frame
        let u = Vec2::new(c * dir.x + sn * dir.y, -sn * dir.x + c * dir.y);
        let s = &self.steps[k];
        let p = Matrix2::new(s[(0, 0)], s[(0, 2)], s[(2, 0)], s[(2, 2)]);
        (u.transpose() * p * u)[(0, 0)].max(0.0).sqrt()
    }

    pub fn with_heading(mut self, heading: f64) -> Self {
        self.frame_heading = heading;
        self
    }
}

/// Runs `Σ_{k+1} = B Σ_w Bᵀ + (A + BK) Σ_k (A + BK)ᵀ` from `Σ_0 = 0` for `n`
/// steps. Without a gain the open-loop matrix is used.
pub fn propagate_covariance(
    model: &PointMassModel,
    gain: Option<&Matrix2x4<f64>>,
    sigma_w: &Matrix2<f64>,
    n: usize,
) -> Result<CovarianceTrajectory, ConfigError> {
    check_psd(sigma_w, "noise covariance")?;
    let acl = match gain {
        Some(k) => model.a + model.b * k,
        None => model.a,
    };
    let q = model.b * sigma_w * model.b.transpose();
    let mut steps = Vec::with_capacity(n + 1);
    let mut s = Matrix4::zeros();
    steps.push(s);
    for _ in 0..n {
        s = q + acl * s * acl.transpose();
        // keep exact symmetry against rounding drift
        s = (s + s.transpose()) * 0.5;
        steps.push(s);
    }
    Ok(CovarianceTrajectory { steps, frame_heading: 0.0 })
}

/// `γ = −2 ln(1 − β)`.
pub fn risk_inflation(beta: f64) -> Result<f64, ConfigError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(ConfigError::Invalid(format!("risk parameter {beta} outside (0, 1)")));
    }
    Ok(-2.0 * (-beta).ln_1p())
}

/// Longitudinal keep-out distance per prediction step for one agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyEnvelope {
    pub half_length: f64,
    pub stop_distance: Vec<f64>,
    pub e_s: Vec<f64>,
    pub eps_safe: f64,
    pub a: Vec<f64>,
}

/// Distance to brake from `ego_v` down to `agent_v`; zero when the ego is not faster.
pub fn stopping_distance(ego_v: f64, agent_v: f64, decel: f64) -> f64 {
    let va = agent_v.max(0.0);
    ((ego_v * ego_v - va * va) / (2.0 * decel)).max(0.0)
}

/// Builds `a_k = l/2 + Δs_stop,k + σ_k √γ + ε_safe`.
///
/// `sigma` holds the longitudinal standard deviation per step and `agent_v`
/// the agent's predicted speed along the ego path per step (negative values
/// are treated as zero).
pub fn safety_envelope(
    sigma: &[f64],
    agent_length: f64,
    beta: f64,
    eps_safe: f64,
    ego_v: f64,
    agent_v: &[f64],
    decel: f64,
) -> Result<SafetyEnvelope, ConfigError> {
    if !(decel > 0.0) {
        return Err(ConfigError::Invalid("braking deceleration must be positive".into()));
    }
    if agent_v.len() != sigma.len() {
        return Err(ConfigError::Dimension(format!("{} speeds for {} covariance steps", agent_v.len(), sigma.len())));
    }
    let g = risk_inflation(beta)?.sqrt();
    let half_length = 0.5 * agent_length;
    let e_s: Vec<f64> = sigma.iter().map(|s| s * g).collect();
    let stop_distance: Vec<f64> = agent_v.iter().map(|va| stopping_distance(ego_v, *va, decel)).collect();
    let a = e_s.iter().zip(&stop_distance).map(|(e, d)| half_length + d + e + eps_safe).collect();
    Ok(SafetyEnvelope { half_length, stop_distance, e_s, eps_safe, a })
}

/// Fraction of sampled linear rollouts whose first position coordinate stays
/// within `σ_k √γ` of the mean, per step `k = 0..=n`.
pub fn empirical_containment(
    model: &PointMassModel,
    gain: Option<&Matrix2x4<f64>>,
    sigma_w: &Matrix2<f64>,
    beta: f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>, ConfigError> {
    let cov = propagate_covariance(model, gain, sigma_w, n)?;
    let g = risk_inflation(beta)?.sqrt();
    let bound: Vec<f64> = (0..=n).map(|k| cov.sigma_s(k) * g).collect();
    let acl = match gain {
        Some(k) => model.a + model.b * k,
        None => model.a,
    };
    let l = psd_sqrt(sigma_w);
    let mut rng = GaussianStream::new(seed, 0);
    let mut inside = vec![0usize; n + 1];
    for _ in 0..trials {
        // deviation from the mean of a linear system is itself linear
        let mut e = Vector4::zeros();
        inside[0] += 1;
        for (k, b) in bound.iter().enumerate().skip(1) {
            e = acl * e + model.b * rng.sample(&l);
            if e[0].abs() <= *b {
                inside[k] += 1;
            }
        }
    }
    Ok(inside.iter().map(|c| *c as f64 / trials as f64).collect())
}
