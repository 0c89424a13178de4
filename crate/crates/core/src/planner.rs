//! Sequential greedy, exhaustive optimum and the myopic baseline.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::policy::{augmented_utility, utility, Policy, PolicySet, TerminalScores, VisitLedger};
use crate::reward::ImportanceConfig;
use crate::world::World;
use crate::{AgentId, Error, NodeId, Result};

/// Default cap on the number of policy combinations the exhaustive planner evaluates.
pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 10_000_000;

pub type FeasibleSets = BTreeMap<AgentId, Vec<Policy>>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub feasible_sizes: BTreeMap<AgentId, usize>,
    pub sets_evaluated: u64,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub chosen: PolicySet,
    pub utility_r: f64,
    pub utility_rbar: f64,
    /// Marginal gain each agent contributed when it was added (greedy only;
    /// sums to `utility_rbar`).
    pub per_agent_gain: BTreeMap<AgentId, f64>,
    pub stats: PlanStats,
}

impl PlanResult {
    fn evaluate(
        world: &World,
        chosen: PolicySet,
        per_agent_gain: BTreeMap<AgentId, f64>,
        cfg: &ImportanceConfig,
        stats: PlanStats,
    ) -> Result<Self> {
        Ok(Self {
            utility_r: utility(world, &chosen),
            utility_rbar: augmented_utility(world, &chosen, cfg)?,
            chosen,
            per_agent_gain,
            stats,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub importance: ImportanceConfig,
    /// Agent order for sequential greedy; `None` means ascending id.
    pub order: Option<Vec<AgentId>>,
    pub brute_force_cap: u128,
}

impl PlannerConfig {
    pub fn new(importance: ImportanceConfig) -> Self {
        Self {
            importance,
            order: None,
            brute_force_cap: DEFAULT_BRUTE_FORCE_CAP,
        }
    }

    pub fn with_order(mut self, order: Vec<AgentId>) -> Self {
        self.order = Some(order);
        self
    }

    fn agent_order(&self, feasible: &FeasibleSets) -> Result<Vec<AgentId>> {
        let Some(order) = &self.order else {
            return Ok(feasible.keys().copied().collect());
        };
        let mut sorted = order.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != order.len() || !sorted.iter().eq(feasible.keys()) {
            return Err(Error::InvalidArgument(
                "agent order must be a permutation of the planning agents".into(),
            ));
        }
        Ok(order.clone())
    }
}

/// Best candidate against the accumulated set behind `ledger`: highest
/// `R`-gain plus weighted terminal importance, first candidate on ties.
pub fn best_response(
    world: &World,
    candidates: &[Policy],
    ledger: &VisitLedger<'_>,
    cfg: &ImportanceConfig,
    scores: &mut TerminalScores,
) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in candidates.iter().enumerate() {
        let gain = ledger.gain(p) + cfg.alpha * scores.score(world, p, cfg)?;
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((i, gain));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty feasible set".into()))
}

/// Sequential greedy: each agent in turn takes its policy of largest marginal
/// gain against the policies already chosen.
pub fn sequential_greedy(world: &World, feasible: &FeasibleSets, cfg: &PlannerConfig) -> Result<PlanResult> {
    let started = Instant::now();
    let order = cfg.agent_order(feasible)?;
    let mut ledger = VisitLedger::new(world);
    let mut scores = TerminalScores::default();
    let mut chosen = PolicySet::new();
    let mut gains = BTreeMap::new();
    let mut evaluated = 0u64;
    for agent in order {
        let candidates = &feasible[&agent];
        let (i, gain) = best_response(world, candidates, &ledger, &cfg.importance, &mut scores)?;
        evaluated += candidates.len() as u64;
        ledger.insert(&candidates[i]);
        chosen.insert(candidates[i].clone())?;
        gains.insert(agent, gain);
    }
    let stats = PlanStats {
        feasible_sizes: feasible.iter().map(|(&a, v)| (a, v.len())).collect(),
        sets_evaluated: evaluated,
        elapsed: started.elapsed(),
    };
    PlanResult::evaluate(world, chosen, gains, &cfg.importance, stats)
}

/// Exhaustive maximiser of the augmented utility over one policy per agent.
pub fn brute_force_optimal(world: &World, feasible: &FeasibleSets, cfg: &PlannerConfig) -> Result<PlanResult> {
    let started = Instant::now();
    let agents: Vec<AgentId> = feasible.keys().copied().collect();
    let mut product: u128 = 1;
    for a in &agents {
        let size = feasible[a].len() as u128;
        if size == 0 {
            return Err(Error::InvalidArgument(format!("agent {a} has an empty feasible set")));
        }
        product = product.saturating_mul(size);
    }
    if product > cfg.brute_force_cap {
        return Err(Error::BudgetExceeded {
            what: "brute-force policy combinations",
            size: product,
            cap: cfg.brute_force_cap,
        });
    }

    let mut scores = TerminalScores::default();
    let bonus: Vec<Vec<f64>> = agents
        .iter()
        .map(|a| {
            feasible[a]
                .iter()
                .map(|p| Ok(cfg.importance.alpha * scores.score(world, p, &cfg.importance)?))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    struct Search<'a, 'w> {
        feasible: Vec<&'a [Policy]>,
        bonus: &'a [Vec<f64>],
        picks: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
        evaluated: u64,
        _w: std::marker::PhantomData<&'w ()>,
    }

    impl<'a, 'w> Search<'a, 'w> {
        fn descend(&mut self, depth: usize, ledger: &VisitLedger<'w>, value: f64) {
            let last = depth + 1 == self.feasible.len();
            for (i, p) in self.feasible[depth].iter().enumerate() {
                let extra = self.bonus[depth][i];
                self.picks.push(i);
                if last {
                    self.evaluated += 1;
                    let v = value + ledger.gain(p) + extra;
                    if self.best.as_ref().is_none_or(|(b, _)| v > *b) {
                        self.best = Some((v, self.picks.clone()));
                    }
                } else {
                    let mut next = ledger.clone();
                    let g = next.insert(p);
                    self.descend(depth + 1, &next, value + g + extra);
                }
                self.picks.pop();
            }
        }
    }

    let mut search = Search {
        feasible: agents.iter().map(|a| feasible[a].as_slice()).collect(),
        bonus: &bonus,
        picks: Vec::new(),
        best: None,
        evaluated: 0,
        _w: std::marker::PhantomData,
    };
    let mut chosen = PolicySet::new();
    if !agents.is_empty() {
        search.descend(0, &VisitLedger::new(world), 0.0);
        let (_, picks) = search.best.take().expect("non-empty search space");
        for (a, i) in agents.iter().zip(picks) {
            chosen.insert(feasible[a][i].clone())?;
        }
    }
    let stats = PlanStats {
        feasible_sizes: feasible.iter().map(|(&a, v)| (a, v.len())).collect(),
        sets_evaluated: search.evaluated,
        elapsed: started.elapsed(),
    };
    PlanResult::evaluate(world, chosen, BTreeMap::new(), &cfg.importance, stats)
}

/// Neighbour (or stay) with the highest instantaneous reward at the agent's
/// arrival time. No coordination: only the world's clock is consulted.
pub fn myopic_greedy_step(world: &World, agent: AgentId) -> Result<NodeId> {
    let state = world.state(agent)?;
    let mut best: Option<(NodeId, f64)> = None;
    for w in world.graph.neighbors_for_move(agent, state.node) {
        let Some(dt) = world.step_time(agent, state.node, w) else {
            continue;
        };
        let r = world.node_reward(w, state.ready_at + dt)?;
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((w, r));
        }
    }
    Ok(best.map_or(state.node, |(w, _)| w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{AgentSpec, GraphBuilder, PatrolGraph};
    use crate::policy::{enumerate_all, DEFAULT_EXPANSION_CAP};
    use crate::reward::RewardFunction;
    use std::sync::Arc;

    const A: AgentId = AgentId(0);
    const B: AgentId = AgentId(1);

    fn grid_world(starts: &[(AgentId, u32)]) -> World {
        let ids: Vec<_> = starts.iter().map(|s| s.0).collect();
        let g = PatrolGraph::grid(3, 3, 1.0, &ids).unwrap();
        let rewards = (0..9).map(|i| RewardFunction::exponential(0.05 + 0.05 * i as f64)).collect();
        let agents = starts
            .iter()
            .map(|&(id, s)| AgentSpec {
                id,
                start_node: NodeId(s),
                dwell: 0.0,
            })
            .collect();
        World::new(Arc::new(g), agents, rewards, 0.0).unwrap()
    }

    #[test]
    fn single_agent_greedy_is_optimal() {
        let w = grid_world(&[(A, 4)]);
        let f = enumerate_all(&w, 3.0, DEFAULT_EXPANSION_CAP).unwrap();
        let cfg = PlannerConfig::new(ImportanceConfig::new(0.1, 1, vec![NodeId(0), NodeId(8)]));
        let g = sequential_greedy(&w, &f, &cfg).unwrap();
        let b = brute_force_optimal(&w, &f, &cfg).unwrap();
        assert_eq!(g.chosen, b.chosen);
        assert_eq!(b.stats.sets_evaluated, f[&A].len() as u64);
    }

    #[test]
    fn greedy_gains_telescope() {
        let w = grid_world(&[(A, 0), (B, 8)]);
        let f = enumerate_all(&w, 3.0, DEFAULT_EXPANSION_CAP).unwrap();
        let cfg = PlannerConfig::new(ImportanceConfig::new(0.1, 1, vec![NodeId(2), NodeId(6)]));
        let g = sequential_greedy(&w, &f, &cfg).unwrap();
        let sum: f64 = g.per_agent_gain.values().sum();
        assert!((sum - g.utility_rbar).abs() < 1e-9);
        let b = brute_force_optimal(&w, &f, &cfg).unwrap();
        assert!(g.utility_rbar >= 0.5 * b.utility_rbar - 1e-9);
        assert!(b.utility_rbar >= g.utility_rbar - 1e-9);
    }

    #[test]
    fn brute_force_cap_guard() {
        let g = PatrolGraph::grid(20, 20, 1.0, &[A, B]).unwrap();
        let agents = [(A, 210), (B, 190)]
            .map(|(id, s)| AgentSpec {
                id,
                start_node: NodeId(s),
                dwell: 0.0,
            })
            .to_vec();
        let w = World::new(Arc::new(g), agents, vec![RewardFunction::linear(1.0); 400], 0.0).unwrap();
        let f = enumerate_all(&w, 4.0, DEFAULT_EXPANSION_CAP).unwrap();
        assert_eq!(f[&A].len() * f[&B].len(), 390_625);
        let mut cfg = PlannerConfig::new(ImportanceConfig::disabled());
        cfg.brute_force_cap = 100_000;
        match brute_force_optimal(&w, &f, &cfg) {
            Err(Error::BudgetExceeded { size, .. }) => assert_eq!(size, 390_625),
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_order() {
        let w = grid_world(&[(A, 0), (B, 8)]);
        let f = enumerate_all(&w, 1.0, DEFAULT_EXPANSION_CAP).unwrap();
        let cfg = PlannerConfig::new(ImportanceConfig::disabled()).with_order(vec![A, A]);
        assert!(sequential_greedy(&w, &f, &cfg).is_err());
    }

    #[test]
    fn myopic_ties_and_hot_neighbour() {
        let g = GraphBuilder::new(3).edges([(0, 1), (1, 2)]).uniform_time(A, 1.0).build().unwrap();
        let mut w = World::new(
            Arc::new(g),
            vec![AgentSpec {
                id: A,
                start_node: NodeId(1),
                dwell: 0.0,
            }],
            vec![RewardFunction::linear(1.0); 3],
            0.0,
        )
        .unwrap();
        // Every option has reward 1 at t=1: lowest id wins.
        assert_eq!(myopic_greedy_step(&w, A).unwrap(), NodeId(0));
        w.rewards[2] = RewardFunction::linear(5.0);
        assert_eq!(myopic_greedy_step(&w, A).unwrap(), NodeId(2));
    }

    #[test]
    fn myopic_all_zero_picks_lowest_id() {
        let g = GraphBuilder::new(3).edges([(0, 1), (1, 2)]).uniform_time(A, 1.0).build().unwrap();
        let mut w = World::new(
            Arc::new(g),
            vec![AgentSpec {
                id: A,
                start_node: NodeId(2),
                dwell: 0.0,
            }],
            vec![RewardFunction::linear(1.0); 3],
            0.0,
        )
        .unwrap();
        w.clock = crate::reward::VisitClock::uniform(3, 1.0);
        assert_eq!(myopic_greedy_step(&w, A).unwrap(), NodeId(1));
    }
}
