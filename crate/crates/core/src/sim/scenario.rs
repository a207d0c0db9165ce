//! Scenario files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentKind, AgentState};
use crate::ego::{EgoParams, EgoState};
use crate::error::{ConfigError, SimError};
use crate::maneuver::HighLevelConfig;
use crate::path::{PathSpec, ReferencePath};
use crate::trajectory::LowLevelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    /// Initial state in path coordinates.
    pub initial: EgoState,
    #[serde(default)]
    pub params: EgoParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    pub initial: AgentState,
    pub model: AgentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub steps: usize,
    pub maneuver_planner: bool,
    pub seed: u64,
    /// When false, agents follow their mean dynamics exactly.
    #[serde(default = "default_noise")]
    pub noise: bool,
    pub path: PathSpec,
    pub ego: EgoSpec,
    #[serde(default)]
    pub low_level: LowLevelConfig,
    #[serde(default)]
    pub high_level: HighLevelConfig,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
}

fn default_noise() -> bool {
    true
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }

    pub fn load(file: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(file)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, SimError> {
        toml::to_string(self).map_err(|e| SimError::Parse(e.to_string()))
    }

    /// Validates every configuration block and builds the reference path.
    pub fn build(&self) -> Result<ReferencePath, ConfigError> {
        let params = &self.ego.params;
        params.validate()?;
        self.low_level.validate()?;
        self.high_level.validate(&self.low_level, params)?;
        if self.steps == 0 {
            return Err(ConfigError::Invalid("episode needs at least one step".into()));
        }
        for a in &self.agents {
            match &a.model {
                AgentKind::Vehicle(c) => c.validate(self.low_level.t, self.high_level.t_h),
                AgentKind::Pedestrian(c) => c.validate(),
            }
            .map_err(|e| ConfigError::Invalid(format!("agent {}: {e}", a.name)))?;
            let s = a.initial;
            if ![s.x, s.y, s.vx, s.vy].iter().all(|v| v.is_finite()) {
                return Err(ConfigError::Invalid(format!("agent {} has a non-finite initial state", a.name)));
            }
        }
        let path = self.path.build(0.5 * params.w_veh)?;
        let x0 = &self.ego.initial;
        if !(0.0..=path.total_length()).contains(&x0.s) {
            return Err(ConfigError::Invalid(format!("ego starts at s = {} outside the path", x0.s)));
        }
        if x0.d.abs() > params.lateral_bound() + 1e-9 || !(0.0..=params.v_max).contains(&x0.v) {
            return Err(ConfigError::Invalid("ego initial state violates its lane or speed bounds".into()));
        }
        Ok(path)
    }
}
