//! Library results checked against small independent reimplementations.

use std::collections::BTreeSet;
use std::sync::Arc;

use patrol_core::policy::{enumerate_policies, utility, DEFAULT_EXPANSION_CAP};
use patrol_core::{
    receding_horizon_run, AgentId, AgentSpec, Algorithm, GraphBuilder, HorizonSchedule, NodeId, PatrolGraph, Policy,
    PolicySet, RewardFunction, World, TIME_EPS,
};
use patrol_core::mission::MissionSetup;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const A: AgentId = AgentId(0);

fn random_edges(rng: &mut ChaCha8Rng, n: u32, extra: f64) -> BTreeSet<(u32, u32)> {
    let mut edges: BTreeSet<_> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(extra) {
                edges.insert((a, b));
            }
        }
    }
    edges
}

fn random_rewards(rng: &mut ChaCha8Rng, n: usize) -> Vec<RewardFunction> {
    (0..n)
        .map(|_| match rng.gen_range(0..3) {
            0 => RewardFunction::exponential(rng.gen_range(0.05..1.0)),
            1 => RewardFunction::linear(rng.gen_range(0.1..2.0)),
            _ => RewardFunction::power(rng.gen_range(0.1..2.0), rng.gen_range(0.2..0.9)),
        })
        .collect()
}

fn random_graph(rng: &mut ChaCha8Rng, n: u32, agents: &[AgentId]) -> PatrolGraph {
    let edges = random_edges(rng, n, 0.3);
    let mut b = GraphBuilder::new(n as usize).edges(edges.iter().copied());
    for &a in agents {
        for &(u, v) in &edges {
            b = b.time(a, u, v, rng.gen_range(1..4) as f64 * 0.5);
        }
    }
    b.build().unwrap()
}

fn floyd_warshall(g: &PatrolGraph, agent: AgentId) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        d[i][i] = 0.0;
    }
    for &(u, v) in g.edges() {
        if let Some(t) = g.edge_time(agent, u, v) {
            d[u.index()][v.index()] = d[u.index()][v.index()].min(t);
            d[v.index()][u.index()] = d[v.index()][u.index()].min(t);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }
        }
    }
    d
}

#[test]
fn shortest_travel_times_match_floyd_warshall() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..40 {
        let n = rng.gen_range(2..12);
        let g = random_graph(&mut rng, n, &[A]);
        let d = floyd_warshall(&g, A);
        for u in g.nodes() {
            for v in g.nodes() {
                let got = g.shortest_travel_time(A, u, v).unwrap().unwrap();
                assert!((got - d[u.index()][v.index()]).abs() < 1e-9, "{u}->{v}: {got} vs {}", d[u.index()][v.index()]);
            }
        }
    }
}

/// Every maximal walk that fits in the horizon, built recursively.
fn naive_policies(world: &World, agent: AgentId, horizon: f64) -> Vec<Policy> {
    fn rec(world: &World, agent: AgentId, end: f64, nodes: &mut Vec<NodeId>, times: &mut Vec<f64>, out: &mut Vec<Policy>) {
        let (v, t) = (*nodes.last().unwrap(), *times.last().unwrap());
        let mut extended = false;
        for w in world.graph.nodes() {
            let Some(dt) = world.step_time(agent, v, w) else { continue };
            if t + dt <= end {
                extended = true;
                nodes.push(w);
                times.push(t + dt);
                rec(world, agent, end, nodes, times, out);
                nodes.pop();
                times.pop();
            }
        }
        if !extended {
            out.push(Policy { agent, nodes: nodes.clone(), times: times.clone() });
        }
    }
    let s = world.state(agent).unwrap();
    let mut out = Vec::new();
    rec(world, agent, s.ready_at + horizon + TIME_EPS, &mut vec![s.node], &mut vec![s.ready_at], &mut out);
    out
}

fn random_world(rng: &mut ChaCha8Rng, n: u32, m: u32, dwell: bool) -> World {
    let ids: Vec<AgentId> = (0..m).map(AgentId).collect();
    let g = random_graph(rng, n, &ids);
    let agents = ids
        .iter()
        .map(|&id| AgentSpec {
            id,
            start_node: NodeId(rng.gen_range(0..n)),
            dwell: if dwell { rng.gen_range(0..2) as f64 * 0.5 } else { 0.0 },
        })
        .collect();
    World::new(Arc::new(g), agents, random_rewards(rng, n as usize), 0.0).unwrap()
}

#[test]
fn enumeration_matches_recursive_generator() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..60 {
        let n = rng.gen_range(1..7);
        let w = random_world(&mut rng, n, 1, true);
        let horizon = rng.gen_range(1..5) as f64;
        let got = enumerate_policies(&w, A, horizon, DEFAULT_EXPANSION_CAP).unwrap();
        let mut want = naive_policies(&w, A, horizon);
        want.sort_by(|a, b| a.canonical_cmp(b));
        assert_eq!(got, want);
        for p in &got {
            p.validate(&w).unwrap();
        }
    }
}

/// Replays every scan in time order against a plain last-visit table.
fn replay_utility(world: &World, ps: &PolicySet) -> f64 {
    let mut scans: Vec<(f64, NodeId)> = ps.iter().flat_map(|p| p.steps().map(|(v, t)| (t, v))).collect();
    scans.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut last: Vec<f64> = world.clock.times().to_vec();
    let mut total = 0.0;
    for (t, v) in scans {
        if t > last[v.index()] + TIME_EPS {
            total += world.rewards[v.index()].eval(t - last[v.index()]);
            last[v.index()] = t;
        }
    }
    total
}

#[test]
fn utility_matches_scan_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.gen_range(1..8);
        let m = rng.gen_range(1..4);
        let w = random_world(&mut rng, n, m, false);
        let mut ps = PolicySet::new();
        for a in w.agent_ids() {
            if rng.gen_bool(0.8) {
                let all = enumerate_policies(&w, a, 3.0, DEFAULT_EXPANSION_CAP).unwrap();
                ps.insert(all[rng.gen_range(0..all.len())].clone()).unwrap();
            }
        }
        let got = utility(&w, &ps);
        let want = replay_utility(&w, &ps);
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn mission_rewards_match_visit_log_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for algo in [Algorithm::Sga, Algorithm::SgaNi, Algorithm::Myopic] {
        for _ in 0..5 {
            let n = rng.gen_range(3..9);
            let world = random_world(&mut rng, n, 2, false);
            let rewards = world.rewards.clone();
            let setup = MissionSetup::new(world);
            let sched = HorizonSchedule { planning_horizon: 2.0, execution_horizon: 1.0, mission_end: 25.0 };
            let trace = receding_horizon_run(&setup, algo, 0.1, &sched).unwrap();

            let mut last = vec![0.0; n as usize];
            let mut total = 0.0;
            for v in &trace.visits {
                let i = v.node.index();
                let mut r = 0.0;
                if v.t > last[i] + TIME_EPS {
                    r = rewards[i].eval(v.t - last[i]);
                    last[i] = v.t;
                }
                assert!((r - v.reward).abs() < 1e-9, "{algo} visit {v:?}: replay {r}");
                total += r;
            }
            assert!((total - trace.total_reward()).abs() <= 1e-9 * total.max(1.0));
            for (i, &fr) in trace.final_rewards.iter().enumerate() {
                assert!((fr - rewards[i].eval(sched.mission_end - last[i])).abs() < 1e-9);
            }
        }
    }
}
