//! Scenario files, the bundled grid experiment and output writers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decentral::{
    run_cloud_protocol, run_flooding_protocol, run_seq_protocol, shortest_seq_route, CloudSchedule, CommGraph,
    ComputeModel, DropoutModel, ProtocolOutcome, SeqOptions,
};
use crate::graph::{AgentSpec, GraphBuilder, PatrolGraph};
use crate::mission::{
    receding_horizon_run, Algorithm, HorizonSchedule, ImportanceSettings, MissionSetup, MissionTrace, ParameterEvent,
};
use crate::planner::{PlannerConfig, DEFAULT_BRUTE_FORCE_CAP};
use crate::policy::{enumerate_all, DEFAULT_EXPANSION_CAP};
use crate::reward::{AnchorRule, RewardFunction};
use crate::world::World;
use crate::{AgentId, Error, NodeId, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn default_edge_time() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    /// 4-neighbour grid, node id `row * cols + col`, same edge time for every agent.
    Grid {
        rows: usize,
        cols: usize,
        #[serde(default = "default_edge_time")]
        edge_time: f64,
    },
    Explicit {
        nodes: usize,
        edges: Vec<(u32, u32)>,
        #[serde(default = "default_edge_time")]
        edge_time: f64,
        /// Per-agent overrides `(agent, a, b, time)`.
        #[serde(default)]
        agent_times: Vec<(AgentId, u32, u32, f64)>,
        #[serde(default)]
        stay_time: Option<f64>,
        #[serde(default)]
        coords: Option<Vec<(f64, f64)>>,
    },
}

impl GraphSpec {
    pub fn node_count(&self) -> usize {
        match self {
            GraphSpec::Grid { rows, cols, .. } => rows * cols,
            GraphSpec::Explicit { nodes, .. } => *nodes,
        }
    }

    fn build(&self, agents: &[AgentId]) -> Result<PatrolGraph> {
        match self {
            GraphSpec::Grid { rows, cols, edge_time } => PatrolGraph::grid(*rows, *cols, *edge_time, agents),
            GraphSpec::Explicit { nodes, edges, edge_time, agent_times, stay_time, coords } => {
                let mut b = GraphBuilder::new(*nodes).edges(edges.iter().copied()).stay_time(*stay_time);
                for &a in agents {
                    b = b.uniform_time(a, *edge_time);
                }
                for &(a, x, y, t) in agent_times {
                    b = b.time(a, x, y, t);
                }
                if let Some(c) = coords {
                    b = b.coords(c.clone());
                }
                b.build()
            }
        }
    }
}

/// Per-node rewards: `default` everywhere, then exponential rates from a
/// row-major grid (inline or CSV), then explicit overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub default: RewardFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    /// CSV of rates, one grid row per line, resolved relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<(NodeId, RewardFunction)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventTarget {
    Nodes { nodes: Vec<NodeId> },
    /// Inclusive grid rectangle.
    Rect { row0: usize, col0: usize, row1: usize, col1: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub time: f64,
    pub target: EventTarget,
    pub reward: RewardFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSpec {
    pub expansion_cap: u64,
    pub brute_force_cap: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_order: Option<Vec<AgentId>>,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        Self {
            expansion_cap: DEFAULT_EXPANSION_CAP,
            brute_force_cap: DEFAULT_BRUTE_FORCE_CAP as u64,
            agent_order: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub graph: GraphSpec,
    pub agents: Vec<AgentSpec>,
    pub rewards: RewardSpec,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    pub schedule: HorizonSchedule,
    #[serde(default)]
    pub importance: ImportanceSettings,
    #[serde(default)]
    pub planner: PlannerSpec,
    /// Communication links between agents; complete graph when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm_links: Option<Vec<(AgentId, AgentId)>>,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                s.schema_version
            )));
        }
        Ok(s)
    }

    /// Reads and validates a scenario; a `lambda_csv` path is inlined.
    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::from_json(&fs::read_to_string(path)?)?;
        if let Some(csv_path) = s.rewards.lambda_csv.take() {
            let full = path.parent().unwrap_or(Path::new(".")).join(csv_path);
            s.rewards.lambda_grid = Some(read_lambda_csv(&full)?);
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    fn agent_ids(&self) -> Vec<AgentId> {
        self.agents.iter().map(|a| a.id).collect()
    }

    fn grid_dims(&self) -> Option<(usize, usize)> {
        match self.graph {
            GraphSpec::Grid { rows, cols, .. } => Some((rows, cols)),
            GraphSpec::Explicit { .. } => None,
        }
    }

    fn event_nodes(&self, target: &EventTarget) -> Result<Vec<NodeId>> {
        match target {
            EventTarget::Nodes { nodes } => Ok(nodes.clone()),
            &EventTarget::Rect { row0, col0, row1, col1 } => {
                let (rows, cols) = self
                    .grid_dims()
                    .ok_or_else(|| invalid("rectangle events need a grid graph"))?;
                if row0 > row1 || col0 > col1 || row1 >= rows || col1 >= cols {
                    return Err(invalid(format!("rectangle ({row0},{col0})-({row1},{col1}) outside {rows}x{cols} grid")));
                }
                Ok((row0..=row1)
                    .flat_map(|r| (col0..=col1).map(move |c| NodeId((r * cols + c) as u32)))
                    .collect())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.build_setup().map(|_| ())
    }

    pub fn node_rewards(&self) -> Result<Vec<RewardFunction>> {
        let n = self.node_count();
        let mut out = vec![self.rewards.default; n];
        if self.rewards.lambda_csv.is_some() {
            return Err(invalid("lambda_csv must be resolved by loading the scenario from a file"));
        }
        if let Some(grid) = &self.rewards.lambda_grid {
            if grid.len() != n {
                return Err(invalid(format!("lambda grid has {} entries for {n} nodes", grid.len())));
            }
            for (slot, &rate) in out.iter_mut().zip(grid) {
                *slot = RewardFunction::exponential(rate);
            }
        }
        for &(v, rf) in &self.rewards.overrides {
            *out.get_mut(v.index()).ok_or(Error::UnknownNode(v))? = rf;
        }
        for rf in &out {
            rf.validate().map_err(|e| invalid(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn build_world(&self) -> Result<World> {
        if self.agents.is_empty() {
            return Err(invalid("scenario has no agents"));
        }
        let graph = self.graph.build(&self.agent_ids())?;
        World::new(Arc::new(graph), self.agents.clone(), self.node_rewards()?, 0.0)
            .map_err(|e| if e.is_validation() { e } else { invalid(e.to_string()) })
    }

    pub fn build_setup(&self) -> Result<MissionSetup> {
        if !(self.schedule.mission_end > 0.0) {
            return Err(invalid("mission_end must be positive"));
        }
        self.schedule.validate().map_err(|e| invalid(e.to_string()))?;
        let world = self.build_world()?;
        if self.events.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(invalid("events must be sorted by time"));
        }
        let mut events = Vec::new();
        for ev in &self.events {
            if !(ev.time.is_finite() && ev.time >= 0.0) {
                return Err(invalid(format!("event time {} must be >= 0", ev.time)));
            }
            ev.reward.validate().map_err(|e| invalid(e.to_string()))?;
            let nodes = self.event_nodes(&ev.target)?;
            if let Some(&v) = nodes.iter().find(|v| !world.graph.contains(**v)) {
                return Err(Error::UnknownNode(v));
            }
            events.push(ParameterEvent { time: ev.time, nodes, reward: ev.reward });
        }
        self.importance
            .resolve(&world.rewards, self.importance.alpha)
            .map_err(|e| invalid(e.to_string()))?;
        if let Some(order) = &self.planner.agent_order {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != world.agent_ids() {
                return Err(invalid("planner.agent_order must be a permutation of the agents"));
            }
        }
        self.comm_graph()?;
        let mut setup = MissionSetup::new(world);
        setup.events = events;
        setup.importance = self.importance.clone();
        setup.expansion_cap = self.planner.expansion_cap;
        setup.brute_force_cap = self.planner.brute_force_cap as u128;
        setup.agent_order = self.planner.agent_order.clone();
        Ok(setup)
    }

    pub fn comm_graph(&self) -> Result<CommGraph> {
        let ids = self.agent_ids();
        match &self.comm_links {
            None => CommGraph::complete(&ids),
            Some(links) => CommGraph::new(ids, links.iter().copied()),
        }
        .map_err(|e| invalid(e.to_string()))
    }
}

fn read_lambda_csv(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        for field in rec?.iter() {
            out.push(
                field
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("bad rate '{field}' in {}", path.display())))?,
            );
        }
    }
    Ok(out)
}

/// Grid scenario with unit edge times, no dwell and exponential rewards with
/// the given row-major rates. `starts` are node ids, one agent per entry.
pub fn generate_grid_scenario(
    rows: usize,
    cols: usize,
    starts: &[u32],
    lambda: Vec<f64>,
    events: Vec<EventSpec>,
) -> Result<Scenario> {
    if rows == 0 || cols == 0 {
        return Err(invalid(format!("grid {rows}x{cols} is empty")));
    }
    if starts.is_empty() {
        return Err(invalid("need at least one agent"));
    }
    let s = Scenario {
        schema_version: SCHEMA_VERSION,
        name: format!("grid_{rows}x{cols}"),
        description: String::new(),
        graph: GraphSpec::Grid { rows, cols, edge_time: 1.0 },
        agents: starts
            .iter()
            .enumerate()
            .map(|(i, &s)| AgentSpec { id: AgentId(i as u32), start_node: NodeId(s), dwell: 0.0 })
            .collect(),
        rewards: RewardSpec {
            default: RewardFunction::exponential(0.01),
            lambda_grid: Some(lambda),
            lambda_csv: None,
            overrides: Vec::new(),
        },
        events,
        schedule: HorizonSchedule { planning_horizon: 4.0, execution_horizon: 1.0, mission_end: 150.0 },
        importance: ImportanceSettings { alpha: 0.1, ..Default::default() },
        planner: PlannerSpec::default(),
        comm_links: None,
        seed: 0,
    };
    s.validate()?;
    Ok(s)
}

/// Stand-in rate field for the bundled 20x20 experiment (row 0 at the top):
/// a dense 6x6 top-left region behind a two-cell low-rate band, three weak
/// Gaussian blobs, and a low-rate rectangle that is raised at t = 100.
pub fn bundled_lambda_map() -> Vec<f64> {
    let (rows, cols) = (20usize, 20usize);
    let blobs = [(12.0, 12.0, 0.02), (17.0, 3.0, 0.01), (3.0, 17.0, 0.01)];
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut rate = 0.002;
            for &(br, bc, amp) in &blobs {
                let d2 = (r as f64 - br).powi(2) + (c as f64 - bc).powi(2);
                rate += amp * (-d2 / 4.0).exp();
            }
            if r < 6 && c < 6 {
                rate = 0.3;
            } else if r < 8 && c < 8 {
                rate = 0.0003;
            } else if BUNDLED_EVENT_RECT.contains(r, c) {
                rate = 0.002;
            }
            out.push((rate * 1e4).round() / 1e4);
        }
    }
    out
}

struct Rect {
    row0: usize,
    col0: usize,
    row1: usize,
    col1: usize,
}

impl Rect {
    fn contains(&self, r: usize, c: usize) -> bool {
        (self.row0..=self.row1).contains(&r) && (self.col0..=self.col1).contains(&c)
    }
}

const BUNDLED_EVENT_RECT: Rect = Rect { row0: 14, col0: 14, row1: 17, col1: 17 };

/// The bundled 20x20, three-agent experiment: H = 4 s, E = 1 s, 150 s
/// mission, rates in the lower-right rectangle raised to 0.25 at t = 100.
/// Agent starts and rates are illustrative stand-ins.
pub fn bundled_scenario() -> Scenario {
    let r = &BUNDLED_EVENT_RECT;
    let event = EventSpec {
        time: 100.0,
        target: EventTarget::Rect { row0: r.row0, col0: r.col0, row1: r.row1, col1: r.col1 },
        reward: RewardFunction::exponential(0.25),
    };
    let starts = [10 * 20 + 10, 11 * 20 + 9, 9 * 20 + 11];
    let mut s = generate_grid_scenario(20, 20, &starts, bundled_lambda_map(), vec![event]).expect("bundled scenario is valid");
    s.name = "grid20_three_agents".into();
    s.description = "20x20 grid, 3 agents starting near the centre, stand-in rate field".into();
    s.importance.anchors = AnchorRule::TopK { k: None };
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub final_reward: f64,
    pub rounds: usize,
    pub visits: usize,
    pub colocated_instants: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub summaries: Vec<RunSummary>,
    pub traces: Vec<MissionTrace>,
    /// Wall-clock seconds per run; not written to any output file.
    #[serde(skip)]
    pub runtimes: Vec<f64>,
}

/// Overrides applied on top of a scenario for one experiment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub alpha: Option<f64>,
    pub planning_horizon: Option<f64>,
    pub execution_horizon: Option<f64>,
    pub mission_end: Option<f64>,
}

impl RunOptions {
    pub fn schedule(&self, base: &HorizonSchedule) -> HorizonSchedule {
        HorizonSchedule {
            planning_horizon: self.planning_horizon.unwrap_or(base.planning_horizon),
            execution_horizon: self.execution_horizon.unwrap_or(base.execution_horizon),
            mission_end: self.mission_end.unwrap_or(base.mission_end),
        }
    }
}

/// Runs each algorithm on its own copy of the scenario, in parallel threads.
pub fn run_experiment(scenario: &Scenario, algorithms: &[Algorithm], opts: &RunOptions) -> Result<ExperimentReport> {
    let setup = scenario.build_setup()?;
    let sched = opts.schedule(&scenario.schedule);
    sched.validate().map_err(|e| invalid(e.to_string()))?;
    let alpha = opts.alpha.unwrap_or(scenario.importance.alpha);
    let results: Vec<Result<(MissionTrace, f64)>> = std::thread::scope(|s| {
        let handles: Vec<_> = algorithms
            .iter()
            .map(|&algo| {
                let setup = &setup;
                s.spawn(move || {
                    let started = std::time::Instant::now();
                    let trace = receding_horizon_run(setup, algo, alpha, &sched)?;
                    Ok((trace, started.elapsed().as_secs_f64()))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("experiment thread panicked")).collect()
    });
    let mut report = ExperimentReport {
        scenario: scenario.name.clone(),
        summaries: Vec::new(),
        traces: Vec::new(),
        runtimes: Vec::new(),
    };
    for r in results {
        let (trace, secs) = r?;
        report.summaries.push(RunSummary {
            algorithm: trace.algorithm,
            alpha: trace.alpha,
            final_reward: trace.total_reward(),
            rounds: trace.rounds.len(),
            visits: trace.visits.len(),
            colocated_instants: trace.colocated_instants(),
        });
        report.traces.push(trace);
        report.runtimes.push(secs);
    }
    Ok(report)
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(contents)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Serialize)]
struct RewardRow<'a> {
    t: f64,
    cumulative_reward: f64,
    algorithm: &'a str,
}

#[derive(Serialize)]
struct TrajectoryRow {
    agent: AgentId,
    t: f64,
    node: NodeId,
}

#[derive(Serialize)]
struct MapRow {
    node: NodeId,
    x: f64,
    y: f64,
    value: f64,
}

fn map_rows(world: &World, values: impl Iterator<Item = f64>) -> Vec<MapRow> {
    values
        .enumerate()
        .map(|(i, value)| {
            let node = NodeId(i as u32);
            let (x, y) = world.graph.coord(node);
            MapRow { node, x, y, value }
        })
        .collect()
}

/// Rate-like parameter of each reward, for plotting.
fn reward_parameter(rf: &RewardFunction) -> f64 {
    match *rf {
        RewardFunction::Exponential { rate } => rate,
        RewardFunction::Linear { weight } | RewardFunction::Power { weight, .. } => weight,
    }
}

/// Writes per-algorithm reward curves, trajectories and final reward maps,
/// the initial rate map and a summary table. Returns the files written.
pub fn write_report(dir: &Path, scenario: &Scenario, report: &ExperimentReport) -> Result<Vec<PathBuf>> {
    let world = scenario.build_world()?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    put("lambda_map.csv".into(), csv_bytes(map_rows(&world, world.rewards.iter().map(reward_parameter)))?)?;
    for trace in &report.traces {
        let algo = trace.algorithm.name();
        put(
            format!("{algo}_reward.csv"),
            csv_bytes(trace.cumulative.iter().map(|s| RewardRow { t: s.t, cumulative_reward: s.cumulative, algorithm: algo }))?,
        )?;
        let traj: Vec<TrajectoryRow> = trace
            .visits
            .iter()
            .map(|v| TrajectoryRow { agent: v.agent, t: v.t, node: v.node })
            .collect();
        put(format!("{algo}_trajectory.json"), (serde_json::to_string_pretty(&traj)? + "\n").into_bytes())?;
        put(
            format!("{algo}_final_map.csv"),
            csv_bytes(map_rows(&world, trace.final_rewards.iter().copied()))?,
        )?;
    }
    put("summary.csv".into(), csv_bytes(&report.summaries)?)?;
    Ok(written)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Seq,
    Cloud,
    Flooding,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq" => Ok(Protocol::Seq),
            "cloud" => Ok(Protocol::Cloud),
            "flooding" => Ok(Protocol::Flooding),
            other => Err(Error::InvalidArgument(format!("unknown protocol '{other}'"))),
        }
    }
}

/// Plans the first round of `scenario` with a decentralised protocol.
/// `dropout` is the per-hop (seq) or per-message (flooding) loss probability;
/// `overrun` is the cloud check-in overrun probability.
pub fn run_decentral(
    scenario: &Scenario,
    protocol: Protocol,
    dropout: f64,
    overrun: f64,
    seed: u64,
) -> Result<ProtocolOutcome> {
    let setup = scenario.build_setup()?;
    let world = &setup.world;
    let cfg = setup.importance.resolve(&world.rewards, scenario.importance.alpha)?;
    let feasible = enumerate_all(world, scenario.schedule.planning_horizon, setup.expansion_cap)?;
    let comm = scenario.comm_graph()?;
    match protocol {
        Protocol::Seq => {
            let route = shortest_seq_route(&comm)?;
            let dropout = if dropout > 0.0 { DropoutModel::Bernoulli { p: dropout } } else { DropoutModel::None };
            run_seq_protocol(world, &route, &feasible, &cfg, &SeqOptions { dropout, seed, reoptimize: false })
        }
        Protocol::Cloud => {
            let order = setup.agent_order.clone().unwrap_or_else(|| world.agent_ids());
            let mut sched = CloudSchedule::back_to_back(&order);
            sched.compute = ComputeModel::Uniform { low: 0.2, high: 0.8 };
            sched.overrun_prob = overrun;
            sched.seed = seed;
            run_cloud_protocol(world, &sched, &feasible, &cfg)
        }
        Protocol::Flooding => {
            let mut pcfg = PlannerConfig::new(cfg);
            pcfg.order = setup.agent_order.clone();
            Ok(run_flooding_protocol(world, &comm, &feasible, &pcfg, dropout, seed)?.outcome)
        }
    }
}

/// Node id lookup for the grid helpers in tests and tools.
pub fn grid_node(cols: usize, row: usize, col: usize) -> NodeId {
    NodeId((row * cols + col) as u32)
}
