//! Patrol graph with heterogeneous per-agent edge times.
//!
//! Edges are undirected. An agent may traverse an edge only if the graph holds a
//! travel time for that (agent, edge) pair, so two agents can see different
//! subgraphs of the same node set. Hop neighbourhoods ignore agents entirely.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::{AgentId, Error, NodeId, Result};

/// Static description of a patrolling agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub start_node: NodeId,
    /// Time the agent lingers on a node to complete a scan, in seconds.
    #[serde(default)]
    pub dwell: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub center: NodeId,
    pub radius: u32,
    pub members: BTreeSet<NodeId>,
}

/// Incrementally assembles a [`PatrolGraph`]; all validation happens in [`GraphBuilder::build`].
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    node_count: usize,
    edges: Vec<(NodeId, NodeId)>,
    times: Vec<(AgentId, NodeId, NodeId, f64)>,
    uniform: Vec<(AgentId, f64)>,
    stay_time: Option<f64>,
    coords: Option<Vec<(f64, f64)>>,
}

impl GraphBuilder {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            ..Self::default()
        }
    }

    pub fn edge(mut self, a: u32, b: u32) -> Self {
        self.edges.push((NodeId(a), NodeId(b)));
        self
    }

    pub fn edges(mut self, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        self.edges
            .extend(edges.into_iter().map(|(a, b)| (NodeId(a), NodeId(b))));
        self
    }

    /// Sets the travel time of `agent` on edge `a`-`b`. Later calls win.
    pub fn time(mut self, agent: AgentId, a: u32, b: u32, t: f64) -> Self {
        self.times.push((agent, NodeId(a), NodeId(b), t));
        self
    }

    /// Gives `agent` the same travel time on every edge without an explicit time.
    pub fn uniform_time(mut self, agent: AgentId, t: f64) -> Self {
        self.uniform.push((agent, t));
        self
    }

    /// Overrides the duration of a stay step for every agent and node.
    pub fn stay_time(mut self, t: Option<f64>) -> Self {
        self.stay_time = t;
        self
    }

    pub fn coords(mut self, coords: Vec<(f64, f64)>) -> Self {
        self.coords = Some(coords);
        self
    }

    pub fn build(self) -> Result<PatrolGraph> {
        let n = self.node_count;
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidGraph("too many nodes".into()));
        }
        let check = |v: NodeId| -> Result<()> {
            if v.index() < n {
                Ok(())
            } else {
                Err(Error::UnknownNode(v))
            }
        };

        let mut edge_set = BTreeSet::new();
        for &(a, b) in &self.edges {
            check(a)?;
            check(b)?;
            if a == b {
                return Err(Error::InvalidGraph(format!("self-edge on node {a}")));
            }
            edge_set.insert(canonical(a, b));
        }
        let edges: Vec<_> = edge_set.into_iter().collect();
        let index: HashMap<(NodeId, NodeId), usize> =
            edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();

        let valid_time = |t: f64| t.is_finite() && t > 0.0;
        let mut edge_times: BTreeMap<AgentId, Vec<Option<f64>>> = BTreeMap::new();
        for &(agent, t) in &self.uniform {
            if !valid_time(t) {
                return Err(Error::InvalidGraph(format!(
                    "agent {agent}: edge time {t} must be positive and finite"
                )));
            }
            edge_times.insert(agent, vec![Some(t); edges.len()]);
        }
        for &(agent, a, b, t) in &self.times {
            check(a)?;
            check(b)?;
            if !valid_time(t) {
                return Err(Error::InvalidGraph(format!(
                    "agent {agent}: edge time {t} on {a}-{b} must be positive and finite"
                )));
            }
            let Some(&e) = index.get(&canonical(a, b)) else {
                return Err(Error::InvalidGraph(format!("no edge {a}-{b}")));
            };
            edge_times
                .entry(agent)
                .or_insert_with(|| vec![None; edges.len()])[e] = Some(t);
        }
        if let Some(t) = self.stay_time {
            if !valid_time(t) {
                return Err(Error::InvalidGraph(format!(
                    "stay time {t} must be positive and finite"
                )));
            }
        }
        if let Some(coords) = &self.coords {
            if coords.len() != n {
                return Err(Error::InvalidGraph(format!(
                    "{} coordinates for {n} nodes",
                    coords.len()
                )));
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        for (i, &(a, b)) in edges.iter().enumerate() {
            adjacency[a.index()].push((b, i));
            adjacency[b.index()].push((a, i));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }

        Ok(PatrolGraph {
            node_count: n,
            edges,
            adjacency,
            edge_times,
            stay_time: self.stay_time,
            coords: self.coords,
            sp_cache: RwLock::new(HashMap::new()),
            hop_cache: RwLock::new(HashMap::new()),
        })
    }
}

fn canonical(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

type DistanceRow = Arc<Vec<Option<f64>>>;

/// Immutable patrol graph. Shortest-path and neighbourhood queries are cached
/// behind locks so a shared `&PatrolGraph` can be queried from several threads.
pub struct PatrolGraph {
    node_count: usize,
    edges: Vec<(NodeId, NodeId)>,
    adjacency: Vec<Vec<(NodeId, usize)>>,
    edge_times: BTreeMap<AgentId, Vec<Option<f64>>>,
    stay_time: Option<f64>,
    coords: Option<Vec<(f64, f64)>>,
    sp_cache: RwLock<HashMap<(AgentId, NodeId), DistanceRow>>,
    hop_cache: RwLock<HashMap<u32, Arc<Vec<Vec<NodeId>>>>>,
}

impl std::fmt::Debug for PatrolGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PatrolGraph")
            .field("nodes", &self.node_count)
            .field("edges", &self.edges.len())
            .field("agents", &self.edge_times.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl PatrolGraph {
    /// 4-neighbour grid, node id `row * cols + col`, same edge time for every listed agent.
    pub fn grid(rows: usize, cols: usize, edge_time: f64, agents: &[AgentId]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGraph(format!("grid {rows}x{cols} is empty")));
        }
        let mut b = GraphBuilder::new(rows * cols);
        let id = |r: usize, c: usize| (r * cols + c) as u32;
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    b = b.edge(id(r, c), id(r, c + 1));
                }
                if r + 1 < rows {
                    b = b.edge(id(r, c), id(r + 1, c));
                }
            }
        }
        for &a in agents {
            b = b.uniform_time(a, edge_time);
        }
        let coords = (0..rows * cols)
            .map(|i| ((i % cols) as f64, (i / cols) as f64))
            .collect();
        b.coords(coords).build()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count as u32).map(NodeId)
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.node_count
    }

    pub fn check_node(&self, v: NodeId) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::UnknownNode(v))
        }
    }

    /// Plot coordinates of `v`; falls back to `(index, 0)` when none were given.
    pub fn coord(&self, v: NodeId) -> (f64, f64) {
        match &self.coords {
            Some(c) => c[v.index()],
            None => (v.index() as f64, 0.0),
        }
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.edge_times.keys().copied()
    }

    /// Travel time of `agent` along the edge `v`-`w`, if the agent can take it.
    pub fn edge_time(&self, agent: AgentId, v: NodeId, w: NodeId) -> Option<f64> {
        let times = self.edge_times.get(&agent)?;
        let row = self.adjacency.get(v.index())?;
        let pos = row.binary_search_by(|&(u, _)| u.cmp(&w)).ok()?;
        times[row[pos].1]
    }

    fn agent_adjacent(&self, agent: AgentId, v: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        let times = self.edge_times.get(&agent);
        self.adjacency[v.index()]
            .iter()
            .filter_map(move |&(w, e)| times.and_then(|t| t[e]).map(|t| (w, t)))
    }

    /// Smallest edge time the agent has anywhere in the graph.
    pub fn min_edge_time(&self, agent: AgentId) -> Option<f64> {
        self.edge_times
            .get(&agent)?
            .iter()
            .flatten()
            .copied()
            .min_by(f64::total_cmp)
    }

    /// Duration of a stay step at `v`: the configured override, else the agent's
    /// cheapest incident edge, else its cheapest edge overall, else one second.
    pub fn stay_time(&self, agent: AgentId, v: NodeId) -> f64 {
        if let Some(t) = self.stay_time {
            return t;
        }
        self.agent_adjacent(agent, v)
            .map(|(_, t)| t)
            .min_by(f64::total_cmp)
            .or_else(|| self.min_edge_time(agent))
            .unwrap_or(1.0)
    }

    /// Time to go from `v` to an adjacent-or-equal node `w`, excluding dwell.
    pub fn move_time(&self, agent: AgentId, v: NodeId, w: NodeId) -> Option<f64> {
        if v == w {
            Some(self.stay_time(agent, v))
        } else {
            self.edge_time(agent, v, w)
        }
    }

    /// `v` plus every neighbour reachable from `v` over one edge the agent can take,
    /// in ascending id order.
    pub fn neighbors_for_move(&self, agent: AgentId, v: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self.agent_adjacent(agent, v).map(|(w, _)| w).collect();
        out.push(v);
        out.sort_unstable();
        out
    }

    /// Shortest pure travel time (no dwell) of `agent` from `v` to `w`.
    /// Returns `Ok(None)` when no traversable path exists.
    pub fn shortest_travel_time(&self, agent: AgentId, v: NodeId, w: NodeId) -> Result<Option<f64>> {
        self.check_node(v)?;
        self.check_node(w)?;
        if v == w {
            return Ok(Some(0.0));
        }
        Ok(self.distances_from(agent, v)[w.index()])
    }

    /// Single-source travel times for `agent`, computed by uniform-cost search and cached.
    pub fn distances_from(&self, agent: AgentId, source: NodeId) -> DistanceRow {
        if let Some(row) = self.sp_cache.read().unwrap().get(&(agent, source)) {
            return Arc::clone(row);
        }
        let row = Arc::new(self.uniform_cost_search(agent, source));
        self.sp_cache
            .write()
            .unwrap()
            .entry((agent, source))
            .or_insert(row)
            .clone()
    }

    fn uniform_cost_search(&self, agent: AgentId, source: NodeId) -> Vec<Option<f64>> {
        #[derive(PartialEq)]
        struct Entry(f64, NodeId);
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
            }
        }

        let mut dist: Vec<Option<f64>> = vec![None; self.node_count];
        let mut done = vec![false; self.node_count];
        let mut heap = BinaryHeap::new();
        dist[source.index()] = Some(0.0);
        heap.push(Entry(0.0, source));
        while let Some(Entry(d, v)) = heap.pop() {
            if std::mem::replace(&mut done[v.index()], true) {
                continue;
            }
            for (w, t) in self.agent_adjacent(agent, v) {
                let nd = d + t;
                if dist[w.index()].is_none_or(|old| nd < old) {
                    dist[w.index()] = Some(nd);
                    heap.push(Entry(nd, w));
                }
            }
        }
        dist
    }

    /// Agent-agnostic breadth-first neighbourhood of radius `r` around `v`.
    pub fn r_hop_neighborhood(&self, v: NodeId, r: u32) -> Result<Neighborhood> {
        self.check_node(v)?;
        Ok(Neighborhood {
            center: v,
            radius: r,
            members: self.hop_members(r)[v.index()].iter().copied().collect(),
        })
    }

    /// Sorted members of every node's `r`-hop neighbourhood, cached per radius.
    pub fn hop_members(&self, r: u32) -> Arc<Vec<Vec<NodeId>>> {
        if let Some(all) = self.hop_cache.read().unwrap().get(&r) {
            return Arc::clone(all);
        }
        let all: Vec<Vec<NodeId>> = self.nodes().map(|v| self.bfs(v, r)).collect();
        self.hop_cache
            .write()
            .unwrap()
            .entry(r)
            .or_insert(Arc::new(all))
            .clone()
    }

    fn bfs(&self, v: NodeId, r: u32) -> Vec<NodeId> {
        let mut hops = vec![u32::MAX; self.node_count];
        let mut queue = VecDeque::from([v]);
        hops[v.index()] = 0;
        let mut out = vec![v];
        while let Some(u) = queue.pop_front() {
            let h = hops[u.index()];
            if h == r {
                continue;
            }
            for &(w, _) in &self.adjacency[u.index()] {
                if hops[w.index()] == u32::MAX {
                    hops[w.index()] = h + 1;
                    out.push(w);
                    queue.push_back(w);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: AgentId = AgentId(0);
    const B: AgentId = AgentId(1);

    fn path4() -> PatrolGraph {
        GraphBuilder::new(4)
            .edges([(0, 1), (1, 2), (2, 3)])
            .uniform_time(A, 1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn path_graph_travel_time() {
        let g = path4();
        assert_eq!(g.shortest_travel_time(A, NodeId(0), NodeId(3)).unwrap(), Some(3.0));
        assert_eq!(g.shortest_travel_time(A, NodeId(0), NodeId(0)).unwrap(), Some(0.0));
    }

    #[test]
    fn unreachable_and_unknown_nodes() {
        let g = GraphBuilder::new(3)
            .edges([(0, 1), (1, 2)])
            .time(A, 0, 1, 2.0)
            .build()
            .unwrap();
        assert_eq!(g.shortest_travel_time(A, NodeId(0), NodeId(2)).unwrap(), None);
        assert_eq!(g.shortest_travel_time(B, NodeId(0), NodeId(1)).unwrap(), None);
        assert!(matches!(
            g.shortest_travel_time(A, NodeId(0), NodeId(9)),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn rejects_self_edges_and_bad_times() {
        assert!(GraphBuilder::new(2).edge(1, 1).build().is_err());
        assert!(GraphBuilder::new(2).edge(0, 1).time(A, 0, 1, 0.0).build().is_err());
        assert!(GraphBuilder::new(2)
            .edge(0, 1)
            .time(A, 0, 1, f64::INFINITY)
            .build()
            .is_err());
        assert!(GraphBuilder::new(2).edge(0, 2).build().is_err());
        assert!(GraphBuilder::new(0).build().is_err());
    }

    #[test]
    fn grid_neighbourhoods() {
        let g = PatrolGraph::grid(3, 3, 1.0, &[A]).unwrap();
        let n = g.r_hop_neighborhood(NodeId(4), 1).unwrap();
        let expect: BTreeSet<_> = [1, 3, 4, 5, 7].map(NodeId).into();
        assert_eq!(n.members, expect);
        let n0 = g.r_hop_neighborhood(NodeId(4), 0).unwrap();
        assert_eq!(n0.members, BTreeSet::from([NodeId(4)]));

        // corner of a 20x20 grid: (0,0), (0,1), (1,0), (0,2), (1,1), (2,0)
        let big = PatrolGraph::grid(20, 20, 1.0, &[A]).unwrap();
        assert_eq!(big.r_hop_neighborhood(NodeId(0), 2).unwrap().members.len(), 6);
        assert_eq!(big.edges().len(), 760);
    }

    #[test]
    fn move_neighbours_are_agent_filtered() {
        let g = PatrolGraph::grid(3, 3, 1.0, &[A]).unwrap();
        assert_eq!(
            g.neighbors_for_move(A, NodeId(4)),
            [1, 3, 4, 5, 7].map(NodeId).to_vec()
        );
        assert_eq!(g.neighbors_for_move(B, NodeId(4)), vec![NodeId(4)]);

        // B lacks a time on 4-5 only.
        let mut b = GraphBuilder::new(9);
        for &(x, y) in g.edges() {
            b = b.edge(x.0, y.0).time(A, x.0, y.0, 1.0);
            if (x, y) != (NodeId(4), NodeId(5)) {
                b = b.time(B, x.0, y.0, 2.0);
            }
        }
        let h = b.build().unwrap();
        assert_eq!(h.neighbors_for_move(B, NodeId(4)), [1, 3, 4, 7].map(NodeId).to_vec());
        assert_eq!(h.shortest_travel_time(B, NodeId(4), NodeId(5)).unwrap(), Some(6.0));
    }

    #[test]
    fn stay_time_defaults() {
        let g = GraphBuilder::new(3)
            .edges([(0, 1), (1, 2)])
            .time(A, 0, 1, 2.0)
            .time(A, 1, 2, 0.5)
            .build()
            .unwrap();
        assert_eq!(g.stay_time(A, NodeId(0)), 2.0);
        assert_eq!(g.stay_time(A, NodeId(1)), 0.5);
        assert_eq!(g.stay_time(B, NodeId(1)), 1.0);
        let fixed = GraphBuilder::new(1).stay_time(Some(0.25)).build().unwrap();
        assert_eq!(fixed.stay_time(A, NodeId(0)), 0.25);
    }
}
