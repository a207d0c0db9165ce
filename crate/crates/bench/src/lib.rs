//! Fixtures shared by the planner benchmarks.

use std::path::PathBuf;

use smpc_core::agents::{AgentKind, AgentState};
use smpc_core::ego::EgoState;
use smpc_core::path::ReferencePath;
use smpc_core::sim::Scenario;
use smpc_core::trajectory::AgentSnapshot;

/// A shipped scenario with its built path.
pub struct Fixture {
    pub scenario: Scenario,
    pub path: ReferencePath,
}

impl Fixture {
    pub fn load(file: &str) -> Self {
        let file = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(file);
        let scenario = Scenario::load(&file).expect("shipped scenario loads");
        let path = scenario.build().expect("shipped scenario is valid");
        Fixture { scenario, path }
    }

    pub fn ego(&self) -> EgoState {
        self.scenario.ego.initial
    }

    pub fn kinds(&self) -> Vec<&AgentKind> {
        self.scenario.agents.iter().map(|a| &a.model).collect()
    }

    pub fn states(&self) -> Vec<AgentState> {
        self.scenario.agents.iter().map(|a| a.initial).collect()
    }
}

pub fn snapshots<'a>(kinds: &[&'a AgentKind], states: &[AgentState]) -> Vec<AgentSnapshot<'a>> {
    kinds.iter().zip(states).enumerate().map(|(id, (kind, state))| AgentSnapshot { id, kind, state: *state }).collect()
}
