//! Closed-loop simulation: scenario files, episodes, scoring and sweeps.

pub mod episode;
pub mod scenario;
pub mod sweep;

pub use episode::{run_episode, run_episode_with, score, EpisodeLog, EpisodeSummary, PlanRecord, StepRecord};
pub use scenario::{AgentSpec, EgoSpec, Scenario};
pub use sweep::{containment_report, sweep, ContainmentReport, SeedResult, SweepSummary, Variation};
