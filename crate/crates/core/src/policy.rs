//! Policies, admissible-policy enumeration and utility evaluation.
//!
//! The utility of a policy set merges every node's visit times across agents,
//! collapses visits at the same instant, and sums `psi_v` over the gaps between
//! consecutive visits, the first gap measured from the node's last visit before
//! planning. Visits at or before that last visit score nothing.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::reward::{ImportanceConfig, RewardFunction};
use crate::world::World;
use crate::{AgentId, Error, NodeId, Result, TIME_EPS};

/// Default cap on enumeration tree nodes per agent.
pub const DEFAULT_EXPANSION_CAP: u64 = 5_000_000;

/// One agent's visit schedule: `nodes[l]` is scanned at `times[l]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub agent: AgentId,
    pub nodes: Vec<NodeId>,
    pub times: Vec<f64>,
}

impl Policy {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn last(&self) -> (NodeId, f64) {
        (*self.nodes.last().unwrap(), *self.times.last().unwrap())
    }

    pub fn steps(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.nodes.iter().copied().zip(self.times.iter().copied())
    }

    /// Canonical order: agent, then node sequence, then times.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.agent
            .cmp(&other.agent)
            .then_with(|| self.nodes.cmp(&other.nodes))
            .then_with(|| {
                self.times
                    .iter()
                    .zip(&other.times)
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
    }

    /// Checks the structural invariants against `world`: starts at the agent's
    /// current node and ready time, only moves along traversable edges or stays,
    /// and every step takes dwell plus move time.
    pub fn validate(&self, world: &World) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("policy of agent {}: {msg}", self.agent)));
        if self.nodes.is_empty() || self.nodes.len() != self.times.len() {
            return bad("node and time sequences must be non-empty and equally long".into());
        }
        let state = world.state(self.agent)?;
        if self.nodes[0] != state.node || (self.times[0] - state.ready_at).abs() > TIME_EPS {
            return bad("does not start at the agent's current position".into());
        }
        for l in 1..self.nodes.len() {
            let (v, w) = (self.nodes[l - 1], self.nodes[l]);
            let Some(dt) = world.step_time(self.agent, v, w) else {
                return bad(format!("step {v} -> {w} is not a move"));
            };
            if !(self.times[l] > self.times[l - 1]) {
                return bad("times must be strictly increasing".into());
            }
            if (self.times[l] - self.times[l - 1] - dt).abs() > 1e-6 {
                return bad(format!("step {v} -> {w} takes {dt}, not {}", self.times[l] - self.times[l - 1]));
            }
        }
        Ok(())
    }
}

/// A policy set holding at most one policy per agent, kept sorted by agent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    policies: Vec<Policy>,
}

impl PolicySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_policies(policies: impl IntoIterator<Item = Policy>) -> Result<Self> {
        let mut set = Self::new();
        for p in policies {
            set.insert(p)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, p: Policy) -> Result<()> {
        match self.policies.binary_search_by(|q| q.agent.cmp(&p.agent)) {
            Ok(_) => Err(Error::MatroidViolation(p.agent)),
            Err(i) => {
                self.policies.insert(i, p);
                Ok(())
            }
        }
    }

    /// Inserts or replaces the policy of `p.agent`.
    pub fn upsert(&mut self, p: Policy) {
        match self.policies.binary_search_by(|q| q.agent.cmp(&p.agent)) {
            Ok(i) => self.policies[i] = p,
            Err(i) => self.policies.insert(i, p),
        }
    }

    pub fn with(&self, p: Policy) -> Result<Self> {
        let mut next = self.clone();
        next.insert(p)?;
        Ok(next)
    }

    pub fn remove(&mut self, agent: AgentId) -> Option<Policy> {
        let i = self.policies.binary_search_by(|q| q.agent.cmp(&agent)).ok()?;
        Some(self.policies.remove(i))
    }

    pub fn get(&self, agent: AgentId) -> Option<&Policy> {
        self.policies
            .binary_search_by(|q| q.agent.cmp(&agent))
            .ok()
            .map(|i| &self.policies[i])
    }

    pub fn contains_agent(&self, agent: AgentId) -> bool {
        self.get(agent).is_some()
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.policies.iter().map(|p| p.agent)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Policy> {
        self.policies.iter()
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }
}

impl<'a> IntoIterator for &'a PolicySet {
    type Item = &'a Policy;
    type IntoIter = std::slice::Iter<'a, Policy>;

    fn into_iter(self) -> Self::IntoIter {
        self.policies.iter()
    }
}

/// Sorts `times` and collapses entries within [`TIME_EPS`] of their predecessor.
pub fn merge_times(times: &mut Vec<f64>) {
    times.sort_by(f64::total_cmp);
    times.dedup_by(|b, a| *b - *a <= TIME_EPS);
}

/// `sum_j psi(t_j - t_{j-1})` over sorted, deduplicated `times` with `t_0 = anchor`.
pub fn gap_reward(rf: &RewardFunction, anchor: f64, times: &[f64]) -> f64 {
    let mut prev = anchor;
    let mut total = 0.0;
    for &t in times {
        total += rf.eval(t - prev);
        prev = t;
    }
    total
}

/// Per-node merged visit sequences of a policy set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeVisitLog {
    visits: BTreeMap<NodeId, Vec<f64>>,
}

impl NodeVisitLog {
    /// Collects the visits of `ps` strictly after each node's last recorded visit.
    pub fn build(world: &World, ps: &PolicySet) -> Self {
        let mut visits: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
        for p in ps {
            for (v, t) in p.steps() {
                if t > world.clock.last_visit(v) + TIME_EPS {
                    visits.entry(v).or_default().push(t);
                }
            }
        }
        for times in visits.values_mut() {
            merge_times(times);
        }
        Self { visits }
    }

    /// Number of distinct scan instants of `v`.
    pub fn count(&self, v: NodeId) -> usize {
        self.visits.get(&v).map_or(0, Vec::len)
    }

    pub fn times(&self, v: NodeId) -> &[f64] {
        self.visits.get(&v).map_or(&[], Vec::as_slice)
    }

    pub fn visited(&self) -> BTreeSet<NodeId> {
        self.visits.keys().copied().collect()
    }

    pub fn reward(&self, world: &World) -> f64 {
        self.visits
            .iter()
            .map(|(&v, times)| gap_reward(&world.rewards[v.index()], world.clock.last_visit(v), times))
            .sum()
    }
}

/// Incremental form of the utility used by the planners: keeps the merged
/// visit sequences of an accumulated set and scores candidate additions.
#[derive(Clone, Debug)]
pub struct VisitLedger<'w> {
    world: &'w World,
    visits: HashMap<NodeId, Vec<f64>>,
    total: f64,
}

impl<'w> VisitLedger<'w> {
    pub fn new(world: &'w World) -> Self {
        Self {
            world,
            visits: HashMap::new(),
            total: 0.0,
        }
    }

    pub fn from_set(world: &'w World, ps: &PolicySet) -> Self {
        let mut ledger = Self::new(world);
        for p in ps {
            ledger.insert(p);
        }
        ledger
    }

    fn fresh_visits(&self, p: &Policy) -> BTreeMap<NodeId, Vec<f64>> {
        let mut by_node: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
        for (v, t) in p.steps() {
            if t > self.world.clock.last_visit(v) + TIME_EPS {
                by_node.entry(v).or_default().push(t);
            }
        }
        by_node
    }

    fn node_gain(&self, v: NodeId, new: &[f64]) -> (f64, Vec<f64>) {
        let rf = &self.world.rewards[v.index()];
        let anchor = self.world.clock.last_visit(v);
        let old = self.visits.get(&v).map_or(&[][..], Vec::as_slice);
        let mut merged = Vec::with_capacity(old.len() + new.len());
        merged.extend_from_slice(old);
        merged.extend_from_slice(new);
        merge_times(&mut merged);
        let gain = gap_reward(rf, anchor, &merged) - gap_reward(rf, anchor, old);
        (gain, merged)
    }

    /// `R(S + p) - R(S)` for the accumulated set `S`.
    pub fn gain(&self, p: &Policy) -> f64 {
        self.fresh_visits(p)
            .iter()
            .map(|(&v, new)| self.node_gain(v, new).0)
            .sum()
    }

    pub fn insert(&mut self, p: &Policy) -> f64 {
        let mut gain = 0.0;
        for (v, new) in self.fresh_visits(p) {
            let (g, merged) = self.node_gain(v, &new);
            gain += g;
            self.visits.insert(v, merged);
        }
        self.total += gain;
        gain
    }

    /// Utility of the accumulated set.
    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Walks the admissible policy tree of `agent` over `horizon`, calling `leaf`
/// on every maximal path. Returns the number of tree nodes expanded.
fn walk_policies(
    world: &World,
    agent: AgentId,
    horizon: f64,
    cap: u64,
    mut leaf: impl FnMut(&[NodeId], &[f64]),
) -> Result<u64> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
    }
    let state = world.state(agent)?;
    let end = state.ready_at + horizon + TIME_EPS;
    let mut nodes = vec![state.node];
    let mut times = vec![state.ready_at];
    let mut expanded = 1u64;

    // Explicit stack of (node index in path, remaining candidate moves).
    let mut stack: Vec<Vec<(NodeId, f64)>> = Vec::new();
    let children = |v: NodeId, t: f64| -> Vec<(NodeId, f64)> {
        let mut out: Vec<(NodeId, f64)> = world
            .graph
            .neighbors_for_move(agent, v)
            .into_iter()
            .filter_map(|w| world.step_time(agent, v, w).map(|dt| (w, t + dt)))
            .filter(|&(_, tw)| tw <= end)
            .collect();
        out.reverse();
        out
    };
    stack.push(children(state.node, state.ready_at));
    if stack[0].is_empty() {
        leaf(&nodes, &times);
        return Ok(expanded);
    }
    while let Some(top) = stack.last_mut() {
        match top.pop() {
            Some((w, tw)) => {
                expanded += 1;
                if expanded > cap {
                    return Err(Error::BudgetExceeded {
                        what: "policy enumeration",
                        size: expanded as u128,
                        cap: cap as u128,
                    });
                }
                nodes.push(w);
                times.push(tw);
                let next = children(w, tw);
                if next.is_empty() {
                    leaf(&nodes, &times);
                    nodes.pop();
                    times.pop();
                } else {
                    stack.push(next);
                }
            }
            None => {
                stack.pop();
                if !stack.is_empty() {
                    nodes.pop();
                    times.pop();
                }
            }
        }
    }
    Ok(expanded)
}

/// All maximal admissible policies of `agent` whose visits fall within
/// `[ready_at, ready_at + horizon]`, in canonical (lexicographic) order.
pub fn enumerate_policies(world: &World, agent: AgentId, horizon: f64, cap: u64) -> Result<Vec<Policy>> {
    let mut out = Vec::new();
    walk_policies(world, agent, horizon, cap, |nodes, times| {
        out.push(Policy {
            agent,
            nodes: nodes.to_vec(),
            times: times.to_vec(),
        })
    })?;
    Ok(out)
}

/// `|P^i|` without materialising the policies.
pub fn count_policies(world: &World, agent: AgentId, horizon: f64, cap: u64) -> Result<u64> {
    let mut count = 0u64;
    walk_policies(world, agent, horizon, cap, |_, _| count += 1)?;
    Ok(count)
}

/// Feasible sets for every agent of the world, keyed by agent.
pub fn enumerate_all(world: &World, horizon: f64, cap: u64) -> Result<BTreeMap<AgentId, Vec<Policy>>> {
    world
        .agent_ids()
        .into_iter()
        .map(|a| Ok((a, enumerate_policies(world, a, horizon, cap)?)))
        .collect()
}

/// `R`: team reward collected by `ps`.
pub fn utility(world: &World, ps: &PolicySet) -> f64 {
    NodeVisitLog::build(world, ps).reward(world)
}

/// Best relative importance from the final step of `p` over the anchors.
pub fn terminal_importance(world: &World, p: &Policy, cfg: &ImportanceConfig) -> Result<f64> {
    if cfg.anchors.is_empty() {
        return Ok(0.0);
    }
    let (w, t) = p.last();
    Ok(world.best_anchor_importance(w, t, p.agent, cfg)?.1)
}

/// `R_bar = R + alpha * sum_p max_anchor L(v, p)`.
pub fn augmented_utility(world: &World, ps: &PolicySet, cfg: &ImportanceConfig) -> Result<f64> {
    let mut bonus = 0.0;
    if cfg.alpha != 0.0 {
        for p in ps {
            bonus += terminal_importance(world, p, cfg)?;
        }
    }
    Ok(utility(world, ps) + cfg.alpha * bonus)
}

/// `R_bar(ps + p) - R_bar(ps)`.
pub fn marginal_gain(world: &World, p: &Policy, ps: &PolicySet, cfg: &ImportanceConfig) -> Result<f64> {
    let with = ps.with(p.clone())?;
    Ok(augmented_utility(world, &with, cfg)? - augmented_utility(world, ps, cfg)?)
}

/// Memoised terminal-importance scores, keyed by (agent, final node, final time).
#[derive(Debug, Default)]
pub struct TerminalScores {
    memo: HashMap<(AgentId, NodeId, u64), f64>,
}

impl TerminalScores {
    pub fn score(&mut self, world: &World, p: &Policy, cfg: &ImportanceConfig) -> Result<f64> {
        if cfg.alpha == 0.0 || cfg.anchors.is_empty() {
            return Ok(0.0);
        }
        let (w, t) = p.last();
        let key = (p.agent, w, t.to_bits());
        if let Some(&s) = self.memo.get(&key) {
            return Ok(s);
        }
        let s = terminal_importance(world, p, cfg)?;
        self.memo.insert(key, s);
        Ok(s)
    }
}
