use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{degraded_gap_bound, CommGraph, InfoGraph, SeqRoute};
use crate::planner::{best_response, sequential_greedy, FeasibleSets, PlanResult, PlanStats, PlannerConfig};
use crate::policy::{augmented_utility, utility, Policy, PolicySet, TerminalScores, VisitLedger};
use crate::reward::ImportanceConfig;
use crate::world::World;
use crate::{AgentId, Error, Result};

/// Flooding gives up after this many synchronous rounds.
const MAX_FLOOD_ROUNDS: usize = 10_000;

/// Loss model for the partial plan carried on each route hop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DropoutModel {
    None,
    /// Each hop loses its payload independently with probability `p`.
    Bernoulli { p: f64 },
    /// Exactly the listed hops lose their payload; hop `k` goes from
    /// `sequence[k]` to `sequence[k + 1]`.
    Pattern { hops: BTreeSet<usize> },
}

impl DropoutModel {
    fn validate(&self) -> Result<()> {
        match self {
            Self::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                Err(Error::InvalidArgument(format!("dropout probability {p} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    fn drops(&self, hop: usize, rng: &mut ChaCha8Rng) -> bool {
        match self {
            Self::None => false,
            Self::Bernoulli { p } => rng.gen_bool(*p),
            Self::Pattern { hops } => hops.contains(&hop),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqOptions {
    pub dropout: DropoutModel,
    pub seed: u64,
    /// Let an agent revise its decision on later visits of the route.
    pub reoptimize: bool,
}

impl Default for SeqOptions {
    fn default() -> Self {
        Self {
            dropout: DropoutModel::None,
            seed: 0,
            reoptimize: false,
        }
    }
}

/// One cloud time slot `[start, end)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub agent: AgentId,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ComputeModel {
    /// Per-agent compute durations; agents not listed finish instantly.
    Fixed { durations: BTreeMap<AgentId, f64> },
    /// Each duration is a uniform fraction `[low, high]` of the agent's slot.
    Uniform { low: f64, high: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudSchedule {
    pub slots: Vec<Slot>,
    pub compute: ComputeModel,
    /// Probability that an agent's check-in is pushed past its slot end by a
    /// uniform delay of up to the whole schedule span.
    pub overrun_prob: f64,
    pub seed: u64,
}

impl CloudSchedule {
    /// Back-to-back unit slots in the given order, instant computation.
    pub fn back_to_back(order: &[AgentId]) -> Self {
        Self {
            slots: order
                .iter()
                .enumerate()
                .map(|(i, &agent)| Slot {
                    agent,
                    start: i as f64,
                    end: i as f64 + 1.0,
                })
                .collect(),
            compute: ComputeModel::Fixed {
                durations: BTreeMap::new(),
            },
            overrun_prob: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self, agents: &BTreeSet<AgentId>) -> Result<()> {
        let listed: BTreeSet<_> = self.slots.iter().map(|s| s.agent).collect();
        if listed.len() != self.slots.len() || &listed != agents {
            return Err(Error::InvalidArgument("slots must cover each planning agent once".into()));
        }
        for s in &self.slots {
            if !(s.start.is_finite() && s.end.is_finite() && s.start < s.end) {
                return Err(Error::InvalidArgument(format!("bad slot for agent {}", s.agent)));
            }
        }
        if self.slots.windows(2).any(|w| w[1].start < w[0].end) {
            return Err(Error::InvalidArgument("slots must be disjoint and in order".into()));
        }
        if !(0.0..=1.0).contains(&self.overrun_prob) {
            return Err(Error::InvalidArgument("overrun probability outside [0, 1]".into()));
        }
        match &self.compute {
            ComputeModel::Fixed { durations } => {
                if durations.values().any(|d| !d.is_finite() || *d < 0.0) {
                    return Err(Error::InvalidArgument("compute durations must be finite and >= 0".into()));
                }
            }
            ComputeModel::Uniform { low, high } => {
                if !(0.0 <= *low && low <= high && high.is_finite()) {
                    return Err(Error::InvalidArgument("need 0 <= low <= high for compute fractions".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ProtocolEvent {
    Hop { step: usize, from: AgentId, to: AgentId, delivered: bool },
    Decide { step: usize, agent: AgentId, known: Vec<AgentId>, gain: f64 },
    Revise { step: usize, agent: AgentId, known: Vec<AgentId>, gain: f64 },
    CheckOut { t: f64, agent: AgentId, known: Vec<AgentId> },
    CheckIn { t: f64, agent: AgentId, late: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub protocol: String,
    pub plan: PlanResult,
    pub info: InfoGraph,
    pub omega: usize,
    pub bound: f64,
    pub messages_sent: usize,
    pub messages_dropped: usize,
    pub events: Vec<ProtocolEvent>,
}

fn finish(
    protocol: &str,
    world: &World,
    feasible: &FeasibleSets,
    cfg: &ImportanceConfig,
    chosen: PolicySet,
    gains: BTreeMap<AgentId, f64>,
    info: InfoGraph,
    sent: usize,
    dropped: usize,
    events: Vec<ProtocolEvent>,
) -> Result<ProtocolOutcome> {
    let omega = info.clique_number()?;
    let plan = PlanResult {
        utility_r: utility(world, &chosen),
        utility_rbar: augmented_utility(world, &chosen, cfg)?,
        chosen,
        per_agent_gain: gains,
        stats: PlanStats {
            feasible_sizes: feasible.iter().map(|(&a, v)| (a, v.len())).collect(),
            sets_evaluated: 0,
            elapsed: Default::default(),
        },
    };
    Ok(ProtocolOutcome {
        protocol: protocol.into(),
        bound: degraded_gap_bound(info.agents.len(), omega)?,
        omega,
        plan,
        info,
        messages_sent: sent,
        messages_dropped: dropped,
        events,
    })
}

/// Partial plan as seen by one agent: latest known decision of each agent.
#[derive(Clone, Debug, Default)]
struct Partial {
    decisions: BTreeMap<AgentId, (u32, Policy)>,
}

impl Partial {
    fn merge(&mut self, other: &Partial) {
        for (&a, (ver, p)) in &other.decisions {
            match self.decisions.get(&a) {
                Some((mine, _)) if mine >= ver => {}
                _ => {
                    self.decisions.insert(a, (*ver, p.clone()));
                }
            }
        }
    }

    fn known_except(&self, agent: AgentId) -> Vec<AgentId> {
        self.decisions.keys().copied().filter(|&a| a != agent).collect()
    }

    fn set_except(&self, agent: AgentId) -> PolicySet {
        let mut ps = PolicySet::new();
        for (&a, (_, p)) in &self.decisions {
            if a != agent {
                ps.upsert(p.clone());
            }
        }
        ps
    }
}

fn check_feasible(feasible: &FeasibleSets, agents: &[AgentId]) -> Result<()> {
    if !feasible.keys().eq(agents.iter()) {
        return Err(Error::InvalidArgument("feasible sets must match the protocol's agents".into()));
    }
    Ok(())
}

/// Token passing along `route`. The token always moves on; a dropped hop
/// loses only the partial plan, and the receiver falls back on what it last
/// held. Each agent decides on its first visit against the plan it holds.
pub fn run_seq_protocol(
    world: &World,
    route: &SeqRoute,
    feasible: &FeasibleSets,
    cfg: &ImportanceConfig,
    opts: &SeqOptions,
) -> Result<ProtocolOutcome> {
    opts.dropout.validate()?;
    let agents: Vec<AgentId> = route.sequence().iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    check_feasible(feasible, &agents)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut held: BTreeMap<AgentId, Partial> = agents.iter().map(|&a| (a, Partial::default())).collect();
    let mut info = InfoGraph::new(agents.iter().copied());
    let mut scores = TerminalScores::default();
    let mut gains = BTreeMap::new();
    let mut events = Vec::new();
    let (mut sent, mut dropped) = (0, 0);

    let seq = route.sequence();
    for (step, &agent) in seq.iter().enumerate() {
        if step > 0 {
            let from = seq[step - 1];
            sent += 1;
            let delivered = !opts.dropout.drops(step - 1, &mut rng);
            if delivered {
                let payload = held[&from].clone();
                held.get_mut(&agent).unwrap().merge(&payload);
            } else {
                dropped += 1;
            }
            events.push(ProtocolEvent::Hop { step, from, to: agent, delivered });
        }

        let mine = &held[&agent];
        let first = !mine.decisions.contains_key(&agent);
        if !first && !opts.reoptimize {
            continue;
        }
        let known = mine.known_except(agent);
        let ledger = VisitLedger::from_set(world, &mine.set_except(agent));
        let candidates = &feasible[&agent];
        let (i, gain) = best_response(world, candidates, &ledger, cfg, &mut scores)?;
        let version = match mine.decisions.get(&agent) {
            None => 0,
            Some((_, p)) if *p == candidates[i] => continue,
            Some((v, _)) => v + 1,
        };
        for &k in &known {
            info.add_edge(k, agent);
        }
        gains.insert(agent, gain);
        held.get_mut(&agent).unwrap().decisions.insert(agent, (version, candidates[i].clone()));
        events.push(if first {
            ProtocolEvent::Decide { step, agent, known, gain }
        } else {
            ProtocolEvent::Revise { step, agent, known, gain }
        });
    }

    // Final decisions reach everyone through the reliable end-of-round broadcast.
    let mut all = Partial::default();
    for p in held.values() {
        all.merge(p);
    }
    let chosen = PolicySet::from_policies(all.decisions.into_values().map(|(_, p)| p))?;
    finish("seq", world, feasible, cfg, chosen, gains, info, sent, dropped, events)
}

/// Cloud coordination with one time slot per agent. An agent checks out the
/// plan at its slot start, and its decision becomes visible to slots that
/// start at or after its check-in.
pub fn run_cloud_protocol(
    world: &World,
    sched: &CloudSchedule,
    feasible: &FeasibleSets,
    cfg: &ImportanceConfig,
) -> Result<ProtocolOutcome> {
    let agents: BTreeSet<AgentId> = feasible.keys().copied().collect();
    sched.validate(&agents)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let span = sched.slots.last().unwrap().end - sched.slots[0].start;

    let mut check_ins: Vec<(f64, Policy)> = Vec::new();
    let mut info = InfoGraph::new(agents.iter().copied());
    let mut scores = TerminalScores::default();
    let mut gains = BTreeMap::new();
    let mut events = Vec::new();
    let mut late = 0;

    for slot in &sched.slots {
        let visible: Vec<&Policy> = check_ins.iter().filter(|(t, _)| *t <= slot.start).map(|(_, p)| p).collect();
        let known: Vec<AgentId> = visible.iter().map(|p| p.agent).collect();
        let ps = PolicySet::from_policies(visible.into_iter().cloned())?;
        events.push(ProtocolEvent::CheckOut { t: slot.start, agent: slot.agent, known: known.clone() });

        let candidates = &feasible[&slot.agent];
        let ledger = VisitLedger::from_set(world, &ps);
        let (i, gain) = best_response(world, candidates, &ledger, cfg, &mut scores)?;
        for &k in &known {
            info.add_edge(k, slot.agent);
        }
        gains.insert(slot.agent, gain);

        let mut duration = match &sched.compute {
            ComputeModel::Fixed { durations } => durations.get(&slot.agent).copied().unwrap_or(0.0),
            ComputeModel::Uniform { low, high } => (slot.end - slot.start) * rng.gen_range(*low..=*high),
        };
        if sched.overrun_prob > 0.0 && rng.gen_bool(sched.overrun_prob) {
            duration = duration.max(slot.end - slot.start) + rng.gen_range(0.0..=span);
        }
        let t = slot.start + duration;
        let is_late = t > slot.end;
        late += usize::from(is_late);
        events.push(ProtocolEvent::CheckIn { t, agent: slot.agent, late: is_late });
        check_ins.push((t, candidates[i].clone()));
    }

    let chosen = PolicySet::from_policies(check_ins.into_iter().map(|(_, p)| p))?;
    let n = sched.slots.len();
    finish("cloud", world, feasible, cfg, chosen, gains, info, 2 * n, late, events)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloodOutcome {
    pub rounds: usize,
    pub messages_sent: usize,
    pub messages_dropped: usize,
    /// Plan computed locally by each agent once it holds every feasible set.
    pub plans: BTreeMap<AgentId, PlanResult>,
    pub identical: bool,
    /// The common plan wrapped as a protocol outcome.
    pub outcome: ProtocolOutcome,
}

/// Every agent floods the feasible sets it knows to its neighbours each round
/// until all agents hold all sets; then each runs sequential greedy locally.
/// `dropout` is the per-message loss probability.
pub fn run_flooding_protocol(
    world: &World,
    comm: &CommGraph,
    feasible: &FeasibleSets,
    cfg: &PlannerConfig,
    dropout: f64,
    seed: u64,
) -> Result<FloodOutcome> {
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::InvalidArgument(format!("flooding dropout {dropout} outside [0, 1)")));
    }
    let agents = comm.agents();
    check_feasible(feasible, agents)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full: BTreeSet<AgentId> = agents.iter().copied().collect();
    let mut known: BTreeMap<AgentId, BTreeSet<AgentId>> = agents.iter().map(|&a| (a, BTreeSet::from([a]))).collect();
    let (mut rounds, mut sent, mut dropped) = (0, 0, 0);
    let mut events = Vec::new();

    while known.values().any(|k| *k != full) {
        if rounds == MAX_FLOOD_ROUNDS {
            return Err(Error::Protocol("flooding did not converge".into()));
        }
        rounds += 1;
        let before = known.clone();
        for (a, b) in comm.links() {
            for (from, to) in [(a, b), (b, a)] {
                sent += 1;
                let delivered = !rng.gen_bool(dropout);
                if delivered {
                    known.get_mut(&to).unwrap().extend(before[&from].iter().copied());
                } else {
                    dropped += 1;
                }
                events.push(ProtocolEvent::Hop { step: rounds, from, to, delivered });
            }
        }
    }

    let mut plans = BTreeMap::new();
    for &a in agents {
        plans.insert(a, sequential_greedy(world, feasible, cfg)?);
    }
    let first = plans.values().next().unwrap().clone();
    let identical = plans.values().all(|p| p.chosen == first.chosen);
    let order = cfg.order.clone().unwrap_or_else(|| agents.to_vec());
    let info = InfoGraph::complete(&order);
    let outcome = finish(
        "flooding",
        world,
        feasible,
        &cfg.importance,
        first.chosen,
        first.per_agent_gain,
        info,
        sent,
        dropped,
        events,
    )?;
    Ok(FloodOutcome {
        rounds,
        messages_sent: sent,
        messages_dropped: dropped,
        plans,
        identical,
        outcome,
    })
}
