//! A planning snapshot: graph, per-node rewards, visit clock and agent states.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::graph::{AgentSpec, PatrolGraph};
use crate::reward::{node_reward, ImportanceConfig, RewardFunction, VisitClock};
use crate::{AgentId, Error, NodeId, Result};

/// Where an agent is and when it can start its next step.
///
/// `ready_at` is the time of the agent's pending scan at `node`: its arrival time
/// when it is finishing a traversal, or the time of its last scan when idle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub node: NodeId,
    pub ready_at: f64,
}

#[derive(Clone, Debug)]
pub struct World {
    pub graph: Arc<PatrolGraph>,
    pub agents: BTreeMap<AgentId, AgentSpec>,
    pub states: BTreeMap<AgentId, AgentState>,
    pub rewards: Vec<RewardFunction>,
    pub clock: VisitClock,
}

impl World {
    /// Fresh world at time zero: every node last visited at `t0`, agents on their start nodes.
    pub fn new(
        graph: Arc<PatrolGraph>,
        agents: Vec<AgentSpec>,
        rewards: Vec<RewardFunction>,
        t0: f64,
    ) -> Result<Self> {
        let clock = VisitClock::uniform(graph.node_count(), t0);
        Self::with_clock(graph, agents, rewards, clock)
    }

    pub fn with_clock(
        graph: Arc<PatrolGraph>,
        agents: Vec<AgentSpec>,
        rewards: Vec<RewardFunction>,
        clock: VisitClock,
    ) -> Result<Self> {
        let n = graph.node_count();
        if rewards.len() != n {
            return Err(Error::Validation(format!(
                "{} reward functions for {n} nodes",
                rewards.len()
            )));
        }
        if clock.len() != n {
            return Err(Error::Validation(format!("clock has {} entries for {n} nodes", clock.len())));
        }
        for rf in &rewards {
            rf.validate()?;
        }
        let mut specs = BTreeMap::new();
        let mut states = BTreeMap::new();
        for a in agents {
            graph.check_node(a.start_node)?;
            if !(a.dwell.is_finite() && a.dwell >= 0.0) {
                return Err(Error::Validation(format!("agent {}: dwell {} invalid", a.id, a.dwell)));
            }
            let ready_at = clock.last_visit(a.start_node);
            states.insert(
                a.id,
                AgentState {
                    node: a.start_node,
                    ready_at,
                },
            );
            if specs.insert(a.id, a).is_some() {
                return Err(Error::Validation("duplicate agent id".into()));
            }
        }
        Ok(Self {
            graph,
            agents: specs,
            states,
            rewards,
            clock,
        })
    }

    pub fn agent(&self, id: AgentId) -> Result<&AgentSpec> {
        self.agents.get(&id).ok_or(Error::UnknownAgent(id))
    }

    pub fn state(&self, id: AgentId) -> Result<AgentState> {
        self.states.get(&id).copied().ok_or(Error::UnknownAgent(id))
    }

    pub fn agent_ids(&self) -> Vec<AgentId> {
        self.agents.keys().copied().collect()
    }

    /// `R_v(t)` against the current clock.
    pub fn node_reward(&self, v: NodeId, t: f64) -> Result<f64> {
        node_reward(&self.rewards[v.index()], t, self.clock.last_visit(v))
    }

    /// Time for `agent` to go from `v` to `w` in one step, including the dwell at `v`.
    pub fn step_time(&self, agent: AgentId, v: NodeId, w: NodeId) -> Option<f64> {
        let dwell = self.agents.get(&agent)?.dwell;
        self.graph.move_time(agent, v, w).map(|m| dwell + m)
    }

    /// `L(v, tau, r)`: total reward in the `r`-hop neighbourhood of `v` at time `tau`.
    pub fn nodal_importance(&self, v: NodeId, tau: f64, r: u32) -> Result<f64> {
        self.graph.check_node(v)?;
        let members = self.graph.hop_members(r);
        members[v.index()]
            .iter()
            .map(|&w| self.node_reward(w, tau))
            .sum()
    }

    /// Relative importance of `v` for `agent` standing at `w` at time `t_hat`:
    /// `L(v, t_hat + tau, r) / max(tau, eps)` with `tau` the travel time `w -> v`.
    /// Unreachable targets score zero.
    pub fn relative_nodal_importance(
        &self,
        v: NodeId,
        w: NodeId,
        t_hat: f64,
        agent: AgentId,
        cfg: &ImportanceConfig,
    ) -> Result<f64> {
        let Some(tau) = self.graph.shortest_travel_time(agent, w, v)? else {
            return Ok(0.0);
        };
        let floor = cfg
            .zero_tau_floor
            .or_else(|| self.graph.min_edge_time(agent))
            .unwrap_or(1.0);
        Ok(self.nodal_importance(v, t_hat + tau, cfg.radius)? / tau.max(floor))
    }

    /// Largest relative importance over the anchors seen from (`w`, `t_hat`);
    /// zero for an empty anchor set. Ties keep the lowest anchor id.
    pub fn best_anchor_importance(
        &self,
        w: NodeId,
        t_hat: f64,
        agent: AgentId,
        cfg: &ImportanceConfig,
    ) -> Result<(Option<NodeId>, f64)> {
        let mut best = (None, 0.0);
        let dist = self.graph.distances_from(agent, w);
        let floor = cfg
            .zero_tau_floor
            .or_else(|| self.graph.min_edge_time(agent))
            .unwrap_or(1.0);
        for &v in &cfg.anchors {
            let Some(tau) = dist[v.index()] else { continue };
            let value = self.nodal_importance(v, t_hat + tau, cfg.radius)? / tau.max(floor);
            if best.0.is_none() || value > best.1 {
                best = (Some(v), value);
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    const A: AgentId = AgentId(0);

    fn linear_world(g: PatrolGraph, start: u32) -> World {
        let n = g.node_count();
        World::new(
            Arc::new(g),
            vec![AgentSpec {
                id: A,
                start_node: NodeId(start),
                dwell: 0.0,
            }],
            vec![RewardFunction::linear(1.0); n],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn importance_on_grid() {
        let w = linear_world(PatrolGraph::grid(3, 3, 1.0, &[A]).unwrap(), 4);
        // five nodes, each idle for 2 s
        assert_eq!(w.nodal_importance(NodeId(4), 2.0, 1).unwrap(), 10.0);
        assert_eq!(w.nodal_importance(NodeId(4), 2.0, 0).unwrap(), 2.0);
        assert_eq!(w.nodal_importance(NodeId(4), 0.0, 3).unwrap(), 0.0);
    }

    #[test]
    fn relative_importance_on_path() {
        let g = GraphBuilder::new(3)
            .edges([(0, 1), (1, 2)])
            .uniform_time(A, 1.0)
            .build()
            .unwrap();
        let w = linear_world(g, 0);
        let cfg = ImportanceConfig::new(0.1, 0, vec![NodeId(2)]);
        // R_c(2) / 2
        assert_eq!(w.relative_nodal_importance(NodeId(2), NodeId(0), 0.0, A, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn zero_travel_time_uses_floor() {
        let g = PatrolGraph::grid(3, 3, 1.0, &[A]).unwrap();
        let w = linear_world(g, 4);
        let mut cfg = ImportanceConfig::new(0.1, 0, vec![NodeId(4)]);
        cfg.zero_tau_floor = Some(1.0);
        // L(center, 4, 0) = 4, tau = 0 -> 4 / 1
        assert_eq!(w.relative_nodal_importance(NodeId(4), NodeId(4), 4.0, A, &cfg).unwrap(), 4.0);
    }

    #[test]
    fn unreachable_or_empty_importance_is_zero() {
        let g = GraphBuilder::new(2).edge(0, 1).build().unwrap();
        let w = linear_world(g, 0);
        let cfg = ImportanceConfig::new(0.1, 1, vec![NodeId(1)]);
        assert_eq!(w.relative_nodal_importance(NodeId(1), NodeId(0), 5.0, A, &cfg).unwrap(), 0.0);
        let none = ImportanceConfig::new(0.1, 1, vec![]);
        assert_eq!(w.best_anchor_importance(NodeId(0), 5.0, A, &none).unwrap(), (None, 0.0));
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let g = Arc::new(PatrolGraph::grid(2, 2, 1.0, &[A]).unwrap());
        let spec = AgentSpec {
            id: A,
            start_node: NodeId(7),
            dwell: 0.0,
        };
        assert!(World::new(g.clone(), vec![spec], vec![RewardFunction::linear(1.0); 4], 0.0).is_err());
        assert!(World::new(g, vec![], vec![RewardFunction::linear(1.0); 3], 0.0).is_err());
    }
}
