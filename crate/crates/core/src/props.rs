//! Executable checks of the inequalities behind submodularity of the utility,
//! with samplers that construct hypothesis-satisfying inputs.
//!
//! Throughout, `g(q) = sum f(q[i+1] - q[i])` over consecutive entries of an
//! increasing time sequence `q`, and `t ⊕ u` is the merged increasing sequence
//! (coincident times counted once).
//!
//! Every `check_*` function validates its hypotheses, returning
//! [`Error::Hypothesis`] if they fail, and otherwise reports whether the
//! inequality holds within [`SLACK`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::graph::{AgentSpec, GraphBuilder};
use crate::planner::FeasibleSets;
use crate::policy::{count_policies, enumerate_all, marginal_gain, merge_times, PolicySet, DEFAULT_EXPANSION_CAP};
use crate::reward::{ImportanceConfig, RewardFunction, VisitClock};
use crate::world::World;
use crate::{AgentId, Error, NodeId, Result};

/// Absolute slack for every inequality check.
pub const SLACK: f64 = 1e-9;
/// Relative tolerance on equal totals.
pub const TOTAL_TOL: f64 = 1e-12;
/// Upper bound on sampled gaps and times.
pub const MAGNITUDE: f64 = 1e3;

fn same_total(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOTAL_TOL * a.abs().max(b.abs()).max(1.0)
}

fn hypothesis(msg: impl Into<String>) -> Error {
    Error::Hypothesis(msg.into())
}

fn require_nonincreasing(name: &str, x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(hypothesis(format!("{name} must be finite and nonnegative")));
    }
    if x.windows(2).any(|w| w[1] > w[0]) {
        return Err(hypothesis(format!("{name} must be nonincreasing")));
    }
    Ok(())
}

fn require_increasing(name: &str, x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(hypothesis(format!("{name} must be finite")));
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(hypothesis(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

/// `g(q)`: reward over the gaps between consecutive entries.
pub fn gap_sum(f: &RewardFunction, q: &[f64]) -> f64 {
    q.windows(2).map(|w| f.eval(w[1] - w[0])).sum()
}

/// `t ⊕ u`.
pub fn concat(t: &[f64], u: &[f64]) -> Vec<f64> {
    let mut out = [t, u].concat();
    merge_times(&mut out);
    out
}

/// Whether nonincreasing `a` majorizes nonincreasing `b` of the same length.
pub fn majorizes(a: &[f64], b: &[f64]) -> Result<bool> {
    require_nonincreasing("a", a)?;
    require_nonincreasing("b", b)?;
    if a.len() != b.len() {
        return Err(hypothesis("majorization needs equal lengths"));
    }
    let (mut sa, mut sb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sa += x;
        sb += y;
        if sa < sb && !same_total(sa, sb) {
            return Ok(false);
        }
    }
    Ok(same_total(sa, sb))
}

/// `sum f(t) <= sum f(v)` for nonincreasing `t` (length n) and `v` (length
/// m >= n) whose prefix sums satisfy `t[..i] >= v[..i]` for `i < n` and whose
/// totals are equal.
pub fn check_lemma_a1(f: &RewardFunction, t: &[f64], v: &[f64]) -> Result<bool> {
    require_nonincreasing("t", t)?;
    require_nonincreasing("v", v)?;
    if t.len() > v.len() {
        return Err(hypothesis("t must not be longer than v"));
    }
    let (mut st, mut sv) = (0.0, 0.0);
    for i in 0..t.len().saturating_sub(1) {
        st += t[i];
        sv += v[i];
        if st < sv && !same_total(st, sv) {
            return Err(hypothesis(format!("prefix {} of t is below v", i + 1)));
        }
    }
    let (tt, tv): (f64, f64) = (t.iter().sum(), v.iter().sum());
    if !same_total(tt, tv) {
        return Err(hypothesis(format!("totals differ: {tt} vs {tv}")));
    }
    let lhs: f64 = t.iter().map(|&x| f.eval(x)).sum();
    let rhs: f64 = v.iter().map(|&x| f.eval(x)).sum();
    Ok(lhs <= rhs + SLACK)
}

/// `f(a) + f(b) - f(a + b) <= f(c) + f(d) - f(c + d)` for `0 <= a <= c`,
/// `0 <= b <= d`: splitting a longer interval gains at least as much.
pub fn check_corollary_a1(f: &RewardFunction, a: f64, b: f64, c: f64, d: f64) -> Result<bool> {
    let ok = |x: f64| x.is_finite() && x >= 0.0;
    if !(ok(a) && ok(b) && a <= c && b <= d && c.is_finite() && d.is_finite()) {
        return Err(hypothesis(format!("need 0 <= a <= c and 0 <= b <= d, got {a}, {b}, {c}, {d}")));
    }
    let split = |x: f64, y: f64| f.eval(x) + f.eval(y) - f.eval(x + y);
    Ok(split(a, b) <= split(c, d) + SLACK)
}

/// `g(t ⊕ u) - g(t) >= 0` for strictly increasing `t` and `u`.
pub fn check_lemma_a2(f: &RewardFunction, t: &[f64], u: &[f64]) -> Result<bool> {
    require_increasing("t", t)?;
    require_increasing("u", u)?;
    Ok(gap_sum(f, &concat(t, u)) - gap_sum(f, t) >= -SLACK)
}

/// `(g(v ⊕ u) - g(v)) - (g(t ⊕ u) - g(t)) >= 0` for strictly increasing
/// `t`, `u` and a subsequence `v` of `t`. `v` must be nonempty whenever `t`
/// is: with `v` empty the first added point earns nothing under `v` while it
/// can split a gap of `t`.
pub fn check_lemma_a3(f: &RewardFunction, t: &[f64], v: &[f64], u: &[f64]) -> Result<bool> {
    require_increasing("t", t)?;
    require_increasing("v", v)?;
    require_increasing("u", u)?;
    let mut rest = t.iter();
    if !v.iter().all(|x| rest.any(|y| y == x)) {
        return Err(hypothesis("v is not a subsequence of t"));
    }
    if v.is_empty() && !t.is_empty() {
        return Err(hypothesis("v must be nonempty when t is"));
    }
    let small = gap_sum(f, &concat(v, u)) - gap_sum(f, v);
    let large = gap_sum(f, &concat(t, u)) - gap_sum(f, t);
    Ok(small - large >= -SLACK)
}

/// `|P^i|` for `agent` over `horizon`.
pub fn count_feasible_policies(world: &World, agent: AgentId, horizon: f64) -> Result<u64> {
    count_policies(world, agent, horizon, DEFAULT_EXPANSION_CAP)
}

/// Cycle of `n >= 3` nodes, one agent at node 0, every move and stay taking
/// `step` seconds: each step offers exactly three choices.
pub fn cycle_world(n: u32, step: f64) -> Result<World> {
    if n < 3 {
        return Err(Error::InvalidArgument("cycle needs at least 3 nodes".into()));
    }
    let a = AgentId(0);
    let g = GraphBuilder::new(n as usize)
        .edges((0..n).map(|i| (i, (i + 1) % n)))
        .uniform_time(a, step)
        .stay_time(Some(step))
        .build()?;
    let agents = vec![AgentSpec { id: a, start_node: NodeId(0), dwell: 0.0 }];
    World::new(Arc::new(g), agents, vec![RewardFunction::linear(1.0); n as usize], 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Exponential,
    Linear,
    Power,
}

impl RewardKind {
    pub const ALL: [RewardKind; 3] = [RewardKind::Exponential, RewardKind::Linear, RewardKind::Power];

    /// Random parameters: rate in [0.001, 2], weight in [0.01, 1], exponent in [0.05, 1].
    pub fn sample(self, rng: &mut impl Rng) -> RewardFunction {
        match self {
            RewardKind::Exponential => RewardFunction::exponential(rng.gen_range(0.001..=2.0)),
            RewardKind::Linear => RewardFunction::linear(rng.gen_range(0.01..=1.0)),
            RewardKind::Power => RewardFunction::power(rng.gen_range(0.01..=1.0), rng.gen_range(0.05..=1.0)),
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardKind::Exponential => "exponential",
            RewardKind::Linear => "linear",
            RewardKind::Power => "power",
        })
    }
}

fn magnitudes(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(0.0..=MAGNITUDE)).collect()
}

fn increasing(rng: &mut impl Rng, max_len: usize) -> Vec<f64> {
    let len = rng.gen_range(0..=max_len);
    let mut x = magnitudes(rng, len);
    x.sort_by(f64::total_cmp);
    x.dedup();
    x
}

/// Nonincreasing `v` of length m in 1..=8; `t` sums a random partition of
/// `v` into n nonempty groups, sorted descending. The largest i groups
/// contain the largest i entries of `v`, so prefix domination and equal
/// totals hold by construction.
pub fn sample_lemma_a1(rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let m = rng.gen_range(1..=8);
    let mut v = magnitudes(rng, m);
    v.sort_by(|a, b| b.total_cmp(a));
    let n = rng.gen_range(1..=m);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let mut cuts: Vec<usize> = (1..m).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(n - 1).collect();
    cuts.sort_unstable();
    cuts.push(m);
    let mut t = Vec::with_capacity(n);
    let mut start = 0;
    for end in cuts {
        t.push(order[start..end].iter().map(|&i| v[i]).sum());
        start = end;
    }
    t.sort_by(|a: &f64, b| b.total_cmp(a));
    (t, v)
}

/// `c, d` uniform in `[0, 1e3]`, then `a` in `[0, c]` and `b` in `[0, d]`.
pub fn sample_corollary_a1(rng: &mut impl Rng) -> [f64; 4] {
    let c = rng.gen_range(0.0..=MAGNITUDE);
    let d = rng.gen_range(0.0..=MAGNITUDE);
    [rng.gen_range(0.0..=c), rng.gen_range(0.0..=d), c, d]
}

/// Two independent sorted draws of up to 8 times each.
pub fn sample_lemma_a2(rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    (increasing(rng, 8), increasing(rng, 8))
}

/// `t` of 1..=8 times; `v` keeps each entry of `t` with probability 1/2 and
/// at least one; `u` has up to 8 fresh times plus, with probability 1/4 each,
/// copies of entries of `t`.
pub fn sample_lemma_a3(rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut t = Vec::new();
    while t.is_empty() {
        t = increasing(rng, 8);
    }
    let mut v: Vec<f64> = t.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
    if v.is_empty() {
        v.push(*t.choose(rng).unwrap());
    }
    let mut u = increasing(rng, 8);
    u.extend(t.iter().copied().filter(|_| rng.gen_bool(0.25)));
    u.sort_by(f64::total_cmp);
    u.dedup();
    (t, v, u)
}

/// Shape of a random planning instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub nodes: (usize, usize),
    pub agents: (usize, usize),
    /// Horizon in unit steps.
    pub steps: (usize, usize),
    /// Resample until the product of feasible-set sizes is at most this.
    pub max_product: u128,
    /// Alpha is drawn from this list; anchors are a random nonempty subset.
    pub alphas: Vec<f64>,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            nodes: (4, 6),
            agents: (2, 2),
            steps: (1, 3),
            max_product: 100_000,
            alphas: vec![0.0, 0.1, 0.5],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub world: World,
    pub feasible: FeasibleSets,
    pub importance: ImportanceConfig,
    pub horizon: f64,
}

impl Instance {
    pub fn product(&self) -> u128 {
        self.feasible.values().map(|v| v.len() as u128).product()
    }
}

/// Random connected graph (random spanning tree plus extra edges with
/// probability 0.3), unit edge times for every agent, random reward kinds and
/// last-visit times in `[0, 2)`, agents on random start nodes. Start nodes
/// are stamped at 2 so every agent is ready no earlier than any last visit.
pub fn random_instance(rng: &mut impl Rng, spec: &InstanceSpec) -> Result<Instance> {
    for _ in 0..1000 {
        let n = rng.gen_range(spec.nodes.0..=spec.nodes.1);
        let m = rng.gen_range(spec.agents.0..=spec.agents.1);
        let ids: Vec<AgentId> = (0..m as u32).map(AgentId).collect();
        let mut edges: BTreeSet<(u32, u32)> = (1..n as u32).map(|i| (rng.gen_range(0..i), i)).collect();
        for a in 0..n as u32 {
            for b in a + 1..n as u32 {
                if rng.gen_bool(0.3) {
                    edges.insert((a, b));
                }
            }
        }
        let mut builder = GraphBuilder::new(n).edges(edges);
        for &a in &ids {
            builder = builder.uniform_time(a, 1.0);
        }
        let graph = builder.build()?;
        let rewards = (0..n).map(|_| RewardKind::ALL.choose(rng).unwrap().sample(rng)).collect();
        let agents: Vec<AgentSpec> = ids
            .iter()
            .map(|&id| AgentSpec { id, start_node: NodeId(rng.gen_range(0..n as u32)), dwell: 0.0 })
            .collect();
        let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        for a in &agents {
            times[a.start_node.index()] = 2.0;
        }
        let clock = VisitClock::from_times(times);
        let world = World::with_clock(Arc::new(graph), agents, rewards, clock)?;
        let horizon = rng.gen_range(spec.steps.0..=spec.steps.1) as f64;
        let alpha = spec.alphas.choose(rng).copied().unwrap_or(0.0);
        let mut anchors: Vec<NodeId> = (0..n as u32).map(NodeId).filter(|_| rng.gen_bool(0.5)).collect();
        if anchors.is_empty() {
            anchors.push(NodeId(rng.gen_range(0..n as u32)));
        }
        let importance = ImportanceConfig::new(alpha, rng.gen_range(0..=2), anchors);
        let feasible = enumerate_all(&world, horizon, DEFAULT_EXPANSION_CAP)?;
        let inst = Instance { world, feasible, importance, horizon };
        if inst.product() <= spec.max_product {
            return Ok(inst);
        }
    }
    Err(Error::InvalidArgument("instance spec never met its product cap".into()))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubmodularityReport {
    pub triples: usize,
    pub monotonicity_violations: usize,
    pub submodularity_violations: usize,
    /// Most negative `gain(q | Q1) - gain(q | Q2)` seen.
    pub worst_gap: f64,
}

/// Samples `Q1 ⊆ Q2` and `q` with `q`'s agent outside `Q2`: `q`'s agent is
/// uniform, each other agent joins `Q2` with probability 1/2 with a uniform
/// policy, and each member of `Q2` stays in `Q1` with probability 1/2.
/// Checks `gain(q | Q1) >= gain(q | Q2) >= 0` within [`SLACK`].
pub fn sample_submodularity(inst: &Instance, rng: &mut impl Rng, triples: usize) -> Result<SubmodularityReport> {
    let agents: Vec<AgentId> = inst.feasible.keys().copied().collect();
    let mut report = SubmodularityReport { triples, ..Default::default() };
    for _ in 0..triples {
        let qa = *agents.choose(rng).unwrap();
        let q = inst.feasible[&qa].choose(rng).unwrap();
        let mut q1 = PolicySet::new();
        let mut q2 = PolicySet::new();
        for &a in agents.iter().filter(|&&a| a != qa) {
            if rng.gen_bool(0.5) {
                let p = inst.feasible[&a].choose(rng).unwrap().clone();
                if rng.gen_bool(0.5) {
                    q1.insert(p.clone())?;
                }
                q2.insert(p)?;
            }
        }
        let g1 = marginal_gain(&inst.world, q, &q1, &inst.importance)?;
        let g2 = marginal_gain(&inst.world, q, &q2, &inst.importance)?;
        if g2 < -SLACK {
            report.monotonicity_violations += 1;
        }
        if g1 - g2 < -SLACK {
            report.submodularity_violations += 1;
        }
        report.worst_gap = report.worst_gap.min(g1 - g2);
    }
    Ok(report)
}

/// One line of the sampled suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub check: String,
    pub kind: Option<RewardKind>,
    pub draws: usize,
    pub violations: usize,
}

impl SuiteRow {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn tally(check: &str, kind: Option<RewardKind>, draws: usize, mut one: impl FnMut() -> Result<bool>) -> Result<SuiteRow> {
    let mut violations = 0;
    for _ in 0..draws {
        if !one()? {
            violations += 1;
        }
    }
    Ok(SuiteRow { check: check.into(), kind, draws, violations })
}

/// Runs every sampled check with `draws` draws each (per reward kind where
/// applicable). A hypothesis error means a sampler bug and is returned as is.
pub fn run_suite(seed: u64, draws: usize) -> Result<Vec<SuiteRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for kind in RewardKind::ALL {
        let r = &mut rng;
        rows.push(tally("lemma_a1", Some(kind), draws, || {
            let f = kind.sample(r);
            let (t, v) = sample_lemma_a1(r);
            check_lemma_a1(&f, &t, &v)
        })?);
        rows.push(tally("corollary_a1", Some(kind), draws, || {
            let f = kind.sample(r);
            let [a, b, c, d] = sample_corollary_a1(r);
            check_corollary_a1(&f, a, b, c, d)
        })?);
        rows.push(tally("lemma_a2", Some(kind), draws, || {
            let f = kind.sample(r);
            let (t, u) = sample_lemma_a2(r);
            check_lemma_a2(&f, &t, &u)
        })?);
        rows.push(tally("lemma_a3", Some(kind), draws, || {
            let f = kind.sample(r);
            let (t, v, u) = sample_lemma_a3(r);
            check_lemma_a3(&f, &t, &v, &u)
        })?);
    }

    // Majorization is a preorder: reflexive and transitive along a chain of
    // Robin Hood transfers.
    let r = &mut rng;
    rows.push(tally("majorization_order", None, draws, || {
        let a = robin_hood_chain(r);
        Ok(majorizes(&a[0], &a[0])? && majorizes(&a[0], &a[1])? && majorizes(&a[1], &a[2])? && majorizes(&a[0], &a[2])?)
    })?);

    let mut counts = Vec::new();
    for steps in 1..=6u32 {
        let w = cycle_world(5, 1.0)?;
        counts.push(count_feasible_policies(&w, AgentId(0), steps as f64)? == 3u64.pow(steps));
    }
    let mut it = counts.into_iter();
    rows.push(tally("policy_count_cycle", None, 6, || Ok(it.next().unwrap()))?);

    let spec = InstanceSpec { agents: (3, 3), steps: (1, 2), ..Default::default() };
    let mut sub = SuiteRow { check: "submodularity".into(), kind: None, draws: 0, violations: 0 };
    for _ in 0..20 {
        let inst = random_instance(&mut rng, &spec)?;
        let rep = sample_submodularity(&inst, &mut rng, draws.clamp(1, 200))?;
        sub.draws += rep.triples;
        sub.violations += rep.monotonicity_violations + rep.submodularity_violations;
    }
    rows.push(sub);
    Ok(rows)
}

/// Three nonincreasing sequences of equal length and total, each obtained
/// from the previous by moving mass from a larger entry to a smaller one
/// without reversing their order.
pub fn robin_hood_chain(rng: &mut impl Rng) -> [Vec<f64>; 3] {
    let n = rng.gen_range(1..=8);
    let mut x = magnitudes(rng, n);
    x.sort_by(|a, b| b.total_cmp(a));
    let first = x.clone();
    let mut step = |x: &mut Vec<f64>| {
        if x.len() < 2 {
            return;
        }
        let i = rng.gen_range(0..x.len() - 1);
        let j = rng.gen_range(i + 1..x.len());
        let moved = rng.gen_range(0.0..=1.0) * (x[i] - x[j]) / 2.0;
        x[i] -= moved;
        x[j] += moved;
        x.sort_by(|a, b| b.total_cmp(a));
    };
    step(&mut x);
    let second = x.clone();
    step(&mut x);
    [first, second, x]
}

/// Counts of feasible policies keyed by agent, for reporting.
pub fn feasible_sizes(feasible: &FeasibleSets) -> BTreeMap<AgentId, usize> {
    feasible.iter().map(|(&a, v)| (a, v.len())).collect()
}
