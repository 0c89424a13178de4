//! Planning engine and simulator for multi-agent persistent monitoring on graphs.
//!
//! Agents patrol the nodes of a [`PatrolGraph`]. Every node carries a concave,
//! increasing reward of the time elapsed since its last scan, which resets to zero
//! when an agent scans it. A plan assigns at most one visit schedule ([`Policy`])
//! to each agent; the team utility is the reward collected at the visit times.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: patrol graph, per-agent travel times, hop neighbourhoods.
//! - [`reward`]: per-node reward functions, visit clock, nodal importance.
//! - [`world`]: a planning snapshot (graph + rewards + clock + agent states).
//! - [`policy`]: policy enumeration over a horizon and utility evaluation.
//! - [`planner`]: sequential greedy, brute-force optimum, myopic baseline.
//! - [`mission`]: receding-horizon mission driver and traces.
//! - [`decentral`]: token-passing, cloud time-slot and flooding protocols.
//! - [`scenario`]: scenario files, grid generation and experiment reports.
//! - [`props`]: executable checks of the concavity/majorization inequalities
//!   behind submodularity, plus random instance samplers.

pub mod decentral;
pub mod error;
pub mod graph;
pub mod mission;
pub mod planner;
pub mod policy;
pub mod props;
pub mod reward;
pub mod scenario;
pub mod world;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use graph::{AgentSpec, GraphBuilder, Neighborhood, PatrolGraph};
pub use mission::{receding_horizon_run, Algorithm, HorizonSchedule, MissionTrace};
pub use planner::{brute_force_optimal, myopic_greedy_step, sequential_greedy, PlanResult};
pub use policy::{Policy, PolicySet};
pub use reward::{ImportanceConfig, RewardFunction, VisitClock};
pub use world::World;

/// Visit times closer than this are treated as the same instant.
pub const TIME_EPS: f64 = 1e-9;

/// Dense node index into a [`PatrolGraph`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
