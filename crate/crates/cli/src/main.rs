use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use patrol_core::mission::Algorithm;
use patrol_core::props::run_suite;
use patrol_core::scenario::{
    bundled_scenario, run_decentral, run_experiment, write_atomic, write_report, Protocol, RunOptions, Scenario,
};
use patrol_core::Error;

/// Multi-agent persistent monitoring planner and simulator.
#[derive(Parser)]
#[command(name = "patrol", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm on a scenario.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "sga_ni")]
        algorithm: Algorithm,
    },
    /// Run several algorithms on the same scenario.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "sga_ni,sga,myopic")]
        algorithms: Vec<Algorithm>,
    },
    /// Plan one round with a decentralised protocol and report the information graph.
    Decentral {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "seq")]
        protocol: Protocol,
        /// Per-hop (seq) or per-message (flooding) loss probability.
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
        /// Cloud check-in overrun probability.
        #[arg(long, default_value_t = 0.0)]
        overrun: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "PATROL_OUT_DIR", default_value = "patrol_out")]
        out: PathBuf,
    },
    /// Check a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run the sampled inequality and counting checks.
    Props {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        draws: usize,
    },
    /// Write the bundled 20x20 scenario as JSON.
    Bundled {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; the bundled 20x20 scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    planning_horizon: Option<f64>,
    #[arg(long)]
    execution_horizon: Option<f64>,
    #[arg(long)]
    mission_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "PATROL_OUT_DIR", default_value = "patrol_out")]
    out: PathBuf,
}

fn load(path: Option<&Path>) -> Result<Scenario, Error> {
    match path {
        Some(p) => Scenario::load(p),
        None => Ok(bundled_scenario()),
    }
}

fn experiment(common: &Common, algorithms: &[Algorithm]) -> Result<(), Error> {
    let mut scenario = load(common.scenario.as_deref())?;
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    let opts = RunOptions {
        alpha: common.alpha,
        planning_horizon: common.planning_horizon,
        execution_horizon: common.execution_horizon,
        mission_end: common.mission_end,
    };
    let report = run_experiment(&scenario, algorithms, &opts)?;
    write_report(&common.out, &scenario, &report)?;
    println!("{:<8} {:>6} {:>14} {:>7} {:>9}", "algo", "alpha", "final_reward", "rounds", "runtime_s");
    for (s, secs) in report.summaries.iter().zip(&report.runtimes) {
        println!(
            "{:<8} {:>6} {:>14.4} {:>7} {:>9.2}",
            s.algorithm.name(),
            s.alpha,
            s.final_reward,
            s.rounds,
            secs
        );
    }
    println!("outputs in {}", common.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { common, algorithm } => experiment(&common, &[algorithm]),
        Command::Compare { common, algorithms } => experiment(&common, &algorithms),
        Command::Decentral { scenario, protocol, dropout, overrun, seed, out } => {
            let s = load(scenario.as_deref())?;
            let seed = seed.unwrap_or(s.seed);
            let outcome = run_decentral(&s, protocol, dropout, overrun, seed)?;
            let name = format!("decentral_{}.json", outcome.protocol);
            write_atomic(&out.join(&name), (serde_json::to_string_pretty(&outcome)? + "\n").as_bytes())?;
            println!("protocol {}", outcome.protocol);
            println!("info edges {}", outcome.info.edges.len());
            println!("omega {}", outcome.omega);
            println!("bound {:.6}", outcome.bound);
            println!("R {:.6}  Rbar {:.6}", outcome.plan.utility_r, outcome.plan.utility_rbar);
            println!("messages {} sent, {} lost", outcome.messages_sent, outcome.messages_dropped);
            println!("trace in {}", out.join(name).display());
            Ok(())
        }
        Command::Validate { scenario } => {
            let s = Scenario::load(&scenario)?;
            println!("ok: {} ({} nodes, {} agents, {} events)", s.name, s.node_count(), s.agents.len(), s.events.len());
            Ok(())
        }
        Command::Props { seed, draws } => {
            let rows = run_suite(seed, draws)?;
            let mut failed = 0;
            for row in &rows {
                let kind = row.kind.map_or("-".to_string(), |k| k.to_string());
                let status = if row.passed() { "PASS" } else { "FAIL" };
                println!("{status} {:<20} {:<12} {:>6} draws {:>4} violations", row.check, kind, row.draws, row.violations);
                failed += usize::from(!row.passed());
            }
            if failed > 0 {
                return Err(Error::Hypothesis(format!("{failed} checks reported violations")));
            }
            Ok(())
        }
        Command::Bundled { out } => write_atomic(&out, bundled_scenario().to_json()?.as_bytes()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() {
                2
            } else if e.is_budget() {
                3
            } else {
                1
            })
        }
    }
}
