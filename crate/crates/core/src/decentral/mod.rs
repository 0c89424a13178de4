//! Decentralised executions of sequential greedy.
//!
//! Three protocols are simulated in logical time with seeded randomness:
//!
//! - token passing along a route over the communication graph, with optional
//!   message loss on each hop ([`run_seq_protocol`]);
//! - a cloud server with disjoint per-agent time slots, where an agent whose
//!   computation overruns its slot checks in late ([`run_cloud_protocol`]);
//! - flooding of all feasible sets followed by local planning
//!   ([`run_flooding_protocol`]).
//!
//! Each run records an [`InfoGraph`]: an edge `i -> j` means agent `j` held
//! agent `i`'s decision when it planned. Its clique number sets the degraded
//! approximation bound `1 / (M - omega + 2)`.

mod clique;
mod protocol;
mod route;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::{AgentId, Error, Result};

pub use clique::{clique_number, degraded_gap_bound};
pub use protocol::{
    run_cloud_protocol, run_flooding_protocol, run_seq_protocol, CloudSchedule, ComputeModel,
    DropoutModel, FloodOutcome, ProtocolEvent, ProtocolOutcome, SeqOptions, Slot,
};
pub use route::shortest_seq_route;

/// Undirected, connected communication graph between agents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommGraph {
    agents: Vec<AgentId>,
    links: BTreeSet<(AgentId, AgentId)>,
}

impl CommGraph {
    pub fn new(agents: impl IntoIterator<Item = AgentId>, links: impl IntoIterator<Item = (AgentId, AgentId)>) -> Result<Self> {
        let agents: Vec<AgentId> = agents.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if agents.is_empty() {
            return Err(Error::InvalidArgument("communication graph has no agents".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in links {
            for x in [a, b] {
                if agents.binary_search(&x).is_err() {
                    return Err(Error::UnknownAgent(x));
                }
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-link on agent {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let g = Self { agents, links: set };
        if g.hop_distances().iter().flatten().any(Option::is_none) {
            return Err(Error::InvalidArgument("communication graph is not connected".into()));
        }
        Ok(g)
    }

    pub fn complete(agents: &[AgentId]) -> Result<Self> {
        let links: Vec<_> = agents
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| agents[i + 1..].iter().map(move |&b| (a, b)))
            .collect();
        Self::new(agents.iter().copied(), links)
    }

    /// Path `agents[0] - agents[1] - ...`.
    pub fn path(agents: &[AgentId]) -> Result<Self> {
        Self::new(agents.iter().copied(), agents.windows(2).map(|w| (w[0], w[1])))
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn links(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.links.iter().copied()
    }

    pub fn linked(&self, a: AgentId, b: AgentId) -> bool {
        self.links.contains(&(a.min(b), a.max(b)))
    }

    fn index(&self, a: AgentId) -> usize {
        self.agents.binary_search(&a).expect("agent in graph")
    }

    /// Sorted neighbour indices of every agent.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.agents.len()];
        for &(a, b) in &self.links {
            let (i, j) = (self.index(a), self.index(b));
            adj[i].push(j);
            adj[j].push(i);
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        adj
    }

    /// All-pairs hop counts; `None` for disconnected pairs.
    fn hop_distances(&self) -> Vec<Vec<Option<usize>>> {
        let adj = self.adjacency();
        (0..self.agents.len())
            .map(|s| {
                let mut dist = vec![None; adj.len()];
                dist[s] = Some(0);
                let mut q = VecDeque::from([s]);
                while let Some(u) = q.pop_front() {
                    for &w in &adj[u] {
                        if dist[w].is_none() {
                            dist[w] = Some(dist[u].unwrap() + 1);
                            q.push_back(w);
                        }
                    }
                }
                dist
            })
            .collect()
    }
}

/// A walk over the communication graph that visits every agent at least once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqRoute {
    sequence: Vec<AgentId>,
}

impl SeqRoute {
    pub fn new(comm: &CommGraph, sequence: Vec<AgentId>) -> Result<Self> {
        if sequence.is_empty() {
            return Err(Error::InvalidArgument("empty route".into()));
        }
        for w in sequence.windows(2) {
            if !comm.linked(w[0], w[1]) {
                return Err(Error::InvalidArgument(format!("route hop {} -> {} is not a link", w[0], w[1])));
            }
        }
        let seen: BTreeSet<_> = sequence.iter().copied().collect();
        if !seen.iter().eq(comm.agents().iter()) {
            return Err(Error::InvalidArgument("route must visit exactly the graph's agents".into()));
        }
        Ok(Self { sequence })
    }

    pub fn sequence(&self) -> &[AgentId] {
        &self.sequence
    }

    pub fn hops(&self) -> usize {
        self.sequence.len() - 1
    }

    /// Agents in the order of their first appearance.
    pub fn first_visit_order(&self) -> Vec<AgentId> {
        let mut seen = BTreeSet::new();
        self.sequence.iter().copied().filter(|a| seen.insert(*a)).collect()
    }
}

/// Directed record of whose decisions each agent held when it planned.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoGraph {
    pub agents: Vec<AgentId>,
    pub edges: BTreeSet<(AgentId, AgentId)>,
}

impl InfoGraph {
    pub fn new(agents: impl IntoIterator<Item = AgentId>) -> Self {
        Self {
            agents: agents.into_iter().collect::<BTreeSet<_>>().into_iter().collect(),
            edges: BTreeSet::new(),
        }
    }

    /// Every agent sees all predecessors in `order`.
    pub fn complete(order: &[AgentId]) -> Self {
        let mut g = Self::new(order.iter().copied());
        for (i, &a) in order.iter().enumerate() {
            for &b in &order[i + 1..] {
                g.edges.insert((a, b));
            }
        }
        g
    }

    pub fn add_edge(&mut self, from: AgentId, to: AgentId) {
        self.edges.insert((from, to));
    }

    pub fn has_edge(&self, from: AgentId, to: AgentId) -> bool {
        self.edges.contains(&(from, to))
    }

    /// True if every edge points forward in `order`.
    pub fn respects_order(&self, order: &[AgentId]) -> bool {
        let pos: BTreeMap<AgentId, usize> = order.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        self.edges
            .iter()
            .all(|(a, b)| matches!((pos.get(a), pos.get(b)), (Some(i), Some(j)) if i < j))
    }

    pub fn clique_number(&self) -> Result<usize> {
        clique_number(self)
    }
}
