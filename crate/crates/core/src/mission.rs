//! Receding-horizon mission driver.
//!
//! Each round plans over `planning_horizon` from the agents' current states,
//! executes the steps that fall before `t_now + execution_horizon`, commits the
//! scans to the visit clock and re-anchors every agent at its first unexecuted
//! step. An agent still traversing an edge at the round boundary therefore
//! replans from its arrival.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::planner::{brute_force_optimal, myopic_greedy_step, sequential_greedy, PlannerConfig};
use crate::policy::{enumerate_all, Policy, DEFAULT_EXPANSION_CAP};
use crate::reward::{node_reward, AnchorRule, ImportanceConfig, RewardFunction};
use crate::world::{AgentState, World};
use crate::{AgentId, Error, NodeId, Result, TIME_EPS};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Sequential greedy on the plain utility (importance weight forced to zero).
    Sga,
    /// Sequential greedy on the importance-augmented utility.
    SgaNi,
    /// Each agent steps to its most rewarding neighbour, uncoordinated.
    Myopic,
    /// Exhaustive optimum of the augmented utility each round.
    Brute,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Sga, Algorithm::SgaNi, Algorithm::Myopic, Algorithm::Brute];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sga => "sga",
            Algorithm::SgaNi => "sga_ni",
            Algorithm::Myopic => "myopic",
            Algorithm::Brute => "brute",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonSchedule {
    pub planning_horizon: f64,
    pub execution_horizon: f64,
    pub mission_end: f64,
}

impl HorizonSchedule {
    pub fn validate(&self) -> Result<()> {
        let (h, e) = (self.planning_horizon, self.execution_horizon);
        if !(e.is_finite() && h.is_finite() && e > 0.0 && e <= h) {
            return Err(Error::Validation(format!(
                "need 0 < execution horizon ({e}) <= planning horizon ({h})"
            )));
        }
        if !(self.mission_end.is_finite() && self.mission_end >= 0.0) {
            return Err(Error::Validation(format!("mission end {} invalid", self.mission_end)));
        }
        Ok(())
    }
}

/// Replaces the reward function of `nodes` once the mission clock reaches `time`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterEvent {
    pub time: f64,
    pub nodes: Vec<NodeId>,
    pub reward: RewardFunction,
}

/// Importance settings before anchor resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSettings {
    pub alpha: f64,
    pub radius: u32,
    pub anchors: AnchorRule,
    pub zero_tau_floor: Option<f64>,
}

impl Default for ImportanceSettings {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            radius: 2,
            anchors: AnchorRule::default(),
            zero_tau_floor: None,
        }
    }
}

impl ImportanceSettings {
    pub fn resolve(&self, rewards: &[RewardFunction], alpha: f64) -> Result<ImportanceConfig> {
        let cfg = ImportanceConfig {
            alpha,
            radius: self.radius,
            anchors: if alpha > 0.0 {
                self.anchors.resolve(rewards)?
            } else {
                Vec::new()
            },
            zero_tau_floor: self.zero_tau_floor,
        };
        cfg.validate(rewards.len())?;
        Ok(cfg)
    }
}

/// Everything a mission needs besides the algorithm and the schedule.
#[derive(Clone, Debug)]
pub struct MissionSetup {
    pub world: World,
    pub events: Vec<ParameterEvent>,
    pub importance: ImportanceSettings,
    pub expansion_cap: u64,
    pub brute_force_cap: u128,
    pub agent_order: Option<Vec<AgentId>>,
}

impl MissionSetup {
    pub fn new(world: World) -> Self {
        Self {
            world,
            events: Vec::new(),
            importance: ImportanceSettings::default(),
            expansion_cap: DEFAULT_EXPANSION_CAP,
            brute_force_cap: crate::planner::DEFAULT_BRUTE_FORCE_CAP,
            agent_order: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutedVisit {
    pub t: f64,
    pub node: NodeId,
    pub agent: AgentId,
    pub reward: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSample {
    pub t: f64,
    pub cumulative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: f64,
    pub planned_r: f64,
    pub planned_rbar: f64,
    pub realized: f64,
    pub chosen: Vec<Policy>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppliedEvent {
    pub event_time: f64,
    pub applied_at: f64,
    pub nodes: Vec<NodeId>,
    pub reward: RewardFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionTrace {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub schedule: HorizonSchedule,
    pub rounds: Vec<RoundRecord>,
    pub visits: Vec<ExecutedVisit>,
    pub cumulative: Vec<RewardSample>,
    pub applied_events: Vec<AppliedEvent>,
    /// `R_v(mission_end)` per node.
    pub final_rewards: Vec<f64>,
    pub final_states: Vec<(AgentId, AgentState)>,
}

impl MissionTrace {
    pub fn total_reward(&self) -> f64 {
        self.cumulative.last().map_or(0.0, |s| s.cumulative)
    }

    /// Instants at which at least two agents scanned the same node.
    pub fn colocated_instants(&self) -> usize {
        let mut count = 0;
        let mut i = 0;
        while i < self.visits.len() {
            let mut j = i + 1;
            let mut clash = false;
            while j < self.visits.len() && (self.visits[j].t - self.visits[i].t).abs() <= TIME_EPS {
                clash |= self.visits[i..j].iter().any(|v| v.node == self.visits[j].node);
                j += 1;
            }
            count += clash as usize;
            i = j;
        }
        count
    }
}

/// Runs a full mission. `alpha` is the importance weight for `SgaNi` and
/// `Brute`; `Sga` always plans with weight zero and `Myopic` ignores it.
pub fn receding_horizon_run(
    setup: &MissionSetup,
    algorithm: Algorithm,
    alpha: f64,
    sched: &HorizonSchedule,
) -> Result<MissionTrace> {
    sched.validate()?;
    let alpha = match algorithm {
        Algorithm::Sga | Algorithm::Myopic => 0.0,
        Algorithm::SgaNi | Algorithm::Brute => alpha,
    };
    let mut world = setup.world.clone();
    let mut events = setup.events.clone();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut next_event = 0;

    let mut trace = MissionTrace {
        algorithm,
        alpha,
        schedule: *sched,
        rounds: Vec::new(),
        visits: Vec::new(),
        cumulative: vec![RewardSample { t: 0.0, cumulative: 0.0 }],
        applied_events: Vec::new(),
        final_rewards: Vec::new(),
        final_states: Vec::new(),
    };
    let mut cumulative = 0.0;
    let mut round = 0u64;
    loop {
        let t_now = round as f64 * sched.execution_horizon;
        if t_now >= sched.mission_end - TIME_EPS {
            break;
        }
        let round_end = t_now + sched.execution_horizon;

        while next_event < events.len() && events[next_event].time <= t_now + TIME_EPS {
            let ev = &events[next_event];
            ev.reward.validate()?;
            for &v in &ev.nodes {
                world.graph.check_node(v)?;
                world.rewards[v.index()] = ev.reward;
            }
            trace.applied_events.push(AppliedEvent {
                event_time: ev.time,
                applied_at: t_now,
                nodes: ev.nodes.clone(),
                reward: ev.reward,
            });
            next_event += 1;
        }

        let in_window = |t: f64| t >= t_now - TIME_EPS && t < round_end - TIME_EPS && t <= sched.mission_end + TIME_EPS;
        let mut executed: Vec<(f64, AgentId, NodeId)> = Vec::new();
        let mut record = RoundRecord {
            t: t_now,
            planned_r: 0.0,
            planned_rbar: 0.0,
            realized: 0.0,
            chosen: Vec::new(),
        };

        match algorithm {
            Algorithm::Myopic => {
                let mut next_states = Vec::new();
                for agent in world.agent_ids() {
                    // Each agent sees the round-start clock plus its own scans.
                    let mut local = world.clone();
                    loop {
                        let st = local.state(agent)?;
                        if st.ready_at >= round_end - TIME_EPS || st.ready_at > sched.mission_end + TIME_EPS {
                            break;
                        }
                        if in_window(st.ready_at) {
                            executed.push((st.ready_at, agent, st.node));
                            local.clock.scan(&local.rewards[st.node.index()], st.node, st.ready_at)?;
                        }
                        let next = myopic_greedy_step(&local, agent)?;
                        let dt = local
                            .step_time(agent, st.node, next)
                            .ok_or_else(|| Error::Protocol(format!("agent {agent} cannot move to {next}")))?;
                        local.states.insert(
                            agent,
                            AgentState {
                                node: next,
                                ready_at: st.ready_at + dt,
                            },
                        );
                    }
                    next_states.push((agent, local.state(agent)?));
                }
                world.states.extend(next_states);
            }
            Algorithm::Sga | Algorithm::SgaNi | Algorithm::Brute => {
                let importance = setup.importance.resolve(&world.rewards, alpha)?;
                let mut cfg = PlannerConfig::new(importance);
                cfg.order = setup.agent_order.clone();
                cfg.brute_force_cap = setup.brute_force_cap;
                let feasible = enumerate_all(&world, sched.planning_horizon, setup.expansion_cap)?;
                let plan = if algorithm == Algorithm::Brute {
                    brute_force_optimal(&world, &feasible, &cfg)?
                } else {
                    sequential_greedy(&world, &feasible, &cfg)?
                };
                record.planned_r = plan.utility_r;
                record.planned_rbar = plan.utility_rbar;
                for p in &plan.chosen {
                    let mut next = None;
                    for (v, t) in p.steps() {
                        if t < round_end - TIME_EPS {
                            if in_window(t) {
                                executed.push((t, p.agent, v));
                            }
                        } else {
                            next = Some(AgentState { node: v, ready_at: t });
                            break;
                        }
                    }
                    let (v, t) = p.last();
                    world.states.insert(p.agent, next.unwrap_or(AgentState { node: v, ready_at: t }));
                }
                record.chosen = plan.chosen.iter().cloned().collect();
            }
        }

        executed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (t, agent, node) in executed {
            let reward = world.clock.scan(&world.rewards[node.index()], node, t)?;
            record.realized += reward;
            trace.visits.push(ExecutedVisit { t, node, agent, reward });
        }
        cumulative += record.realized;
        trace.cumulative.push(RewardSample {
            t: round_end.min(sched.mission_end),
            cumulative,
        });
        trace.rounds.push(record);
        round += 1;
    }

    let end = sched.mission_end;
    trace.final_rewards = world
        .graph
        .nodes()
        .map(|v| node_reward(&world.rewards[v.index()], end.max(world.clock.last_visit(v)), world.clock.last_visit(v)))
        .collect::<Result<_>>()?;
    trace.final_states = world.states.iter().map(|(&a, &s)| (a, s)).collect();
    Ok(trace)
}
