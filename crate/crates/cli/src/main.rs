use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cpsfl_core::agent::{PpoConfig, Variant};
use cpsfl_core::airspace::{read_trajectory_csv, write_trajectory_csv, Channel, MobileChannel};
use cpsfl_core::error::{ConfigError, SimError};
use cpsfl_core::experiments::{
    compare_paradigms, summarize, train_drl_many, verify, write_rows_csv, Sweep, VerifySuite, DEFAULT_SEEDS, DEFAULT_SPLIT,
};
use cpsfl_core::paradigms::{gantt_json, run_training, write_events_csv, Paradigm, UniformPlans};
use cpsfl_core::profiles::{builtin_scenario, load_scenario, Scenario};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CERTIFICATION: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "cpsfl", version, about = "Split federated learning round simulator and experiment runner")]
struct Cli {
    /// Scenario document; the built-in default scenario when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed; the scenario's `rng_seed` when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mean round latency of every paradigm over a parameter sweep.
    CompareParadigms(CompareArgs),
    /// Event log and Gantt bars of consecutive rounds.
    Timeline(TimelineArgs),
    /// Trains the split and allocation agent.
    TrainDrl(TrainArgs),
    /// Runs a randomized certification suite.
    Verify(VerifyArgs),
    /// Writes UAV trajectories and channel gains.
    ExportTrajectory(TrajectoryArgs),
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// `split`, `iterations`, `clients` or `cluster`, optionally `=a..b` or `=a,b,c`.
    #[arg(long, default_value = "split")]
    sweep: Sweep,
    #[arg(long, default_value_t = 500)]
    rounds: usize,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = DEFAULT_SEEDS)]
    seeds: usize,
    /// Comma-separated subset of paradigms; all when omitted.
    #[arg(long, value_delimiter = ',')]
    paradigm: Vec<Paradigm>,
}

#[derive(Args, Debug)]
struct TimelineArgs {
    /// Comma-separated paradigms.
    #[arg(long, value_delimiter = ',', default_value = "cpsfl")]
    paradigm: Vec<Paradigm>,
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    #[arg(long, default_value_t = DEFAULT_SPLIT)]
    split: u32,
    /// Replays a trajectory CSV instead of generating mobility.
    #[arg(long, value_name = "PATH")]
    trajectory: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Comma-separated variants: `full`, `minus`, `fixed_ra`, `fixed_u(N)`.
    #[arg(long, value_delimiter = ',', default_value = "full")]
    variant: Vec<Variant>,
    #[arg(long, default_value = "cpsfl")]
    paradigm: Paradigm,
    /// Rounds; the scenario's round count when omitted.
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Overrides the scenario's local iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    /// JSON file with PPO hyperparameters; missing keys keep their defaults.
    #[arg(long, value_name = "PATH")]
    ppo: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// `theorems`, `bounds` or `closed_forms`.
    #[arg(long, default_value = "theorems")]
    level: VerifySuite,
    /// Instances, or rounds for `bounds`.
    #[arg(long)]
    budget: Option<usize>,
    /// Alias of `--budget`.
    #[arg(long, conflicts_with = "budget")]
    rounds: Option<usize>,
}

#[derive(Args, Debug)]
struct TrajectoryArgs {
    #[arg(long, default_value_t = 1000)]
    slots: u64,
}

/// Error classes with their own exit codes.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Certification(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let is_config = e.chain().any(|c| {
            c.downcast_ref::<ConfigError>().is_some() || matches!(c.downcast_ref::<SimError>(), Some(SimError::Config(_)))
        });
        if is_config {
            Failure::Config(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Certification(msg)) => {
            eprintln!("certification failed: {msg}");
            ExitCode::from(EXIT_CERTIFICATION)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let scenario = load_config(cli.config.as_deref()).map_err(Failure::Config)?;
    let seed = cli.seed.unwrap_or(scenario.config.rng_seed);
    match &cli.command {
        Command::CompareParadigms(a) => compare(cli, &scenario, seed, a)?,
        Command::Timeline(a) => timeline(cli, &scenario, seed, a)?,
        Command::TrainDrl(a) => train(cli, scenario, seed, a)?,
        Command::Verify(a) => return verify_cmd(cli, &scenario, seed, a),
        Command::ExportTrajectory(a) => export_trajectory(cli, &scenario, seed, a)?,
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<Scenario> {
    let Some(path) = path else {
        return Ok(builtin_scenario());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_scenario(&text).with_context(|| format!("loading {}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn seed_list(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base + i).collect()
}

fn compare(cli: &Cli, scenario: &Scenario, seed: u64, a: &CompareArgs) -> Result<()> {
    let paradigms = if a.paradigm.is_empty() { Paradigm::ALL.to_vec() } else { a.paradigm.clone() };
    let rows = compare_paradigms(scenario, &a.sweep, &paradigms, a.rounds, &seed_list(seed, a.seeds), cli.workers)?;
    let summary = summarize(&rows);
    let kind = a.sweep.kind();
    write_rows_csv(create(&cli.out, &format!("compare_{kind}.csv"))?, &rows)?;
    write_rows_csv(create(&cli.out, &format!("compare_{kind}_summary.csv"))?, &summary)?;
    for s in &summary {
        println!(
            "{kind}={:<3} {:<16} mean {:.4} s  [{:.4}, {:.4}]",
            s.value, s.paradigm, s.mean_tau_s, s.min_tau_s, s.max_tau_s
        );
    }
    Ok(())
}

fn timeline(cli: &Cli, scenario: &Scenario, seed: u64, a: &TimelineArgs) -> Result<()> {
    scenario.split(a.split)?;
    let open = || -> Result<Box<dyn Channel>> {
        Ok(match &a.trajectory {
            Some(path) => {
                let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                Box::new(read_trajectory_csv(f, scenario.config.slot_s)?)
            }
            None => Box::new(MobileChannel::new(scenario, seed)?),
        })
    };
    for &p in &a.paradigm {
        // Every paradigm replays the same mobility from t = 0.
        let channel = open()?;
        if channel.clients() != scenario.k() {
            bail!(ConfigError::Invalid {
                field: "trajectory".into(),
                value: channel.clients().to_string(),
                reason: format!("scenario has {} clients", scenario.k()),
            });
        }
        let mut plans = UniformPlans::for_paradigm(p, scenario, a.split);
        let outcomes = run_training(p, &mut plans, scenario, channel.as_ref(), a.rounds, 0.0)?;
        let slug = p.slug();
        let traces: Vec<_> = outcomes.iter().enumerate().map(|(n, o)| (n, &o.trace)).collect();
        write_events_csv(create(&cli.out, &format!("timeline_{slug}_events.csv"))?, &traces)?;
        let mut energy = csv::Writer::from_writer(create(&cli.out, &format!("timeline_{slug}_rounds.csv"))?);
        energy.write_record(["round", "t_start_s", "tau_s", "max_energy_J", "objective"])?;
        for (n, o) in outcomes.iter().enumerate() {
            energy.write_record([
                n.to_string(),
                o.trace.t_start.to_string(),
                o.tau().to_string(),
                o.max_energy.to_string(),
                o.objective.to_string(),
            ])?;
            let f = create(&cli.out, &format!("timeline_{slug}_round{n}.json"))?;
            serde_json::to_writer_pretty(f, &gantt_json(&o.trace))?;
            println!("{:<16} round {n}: tau {:.4} s, max energy {:.4} J", p.name(), o.tau(), o.max_energy);
        }
        energy.flush()?;
    }
    Ok(())
}

fn train(cli: &Cli, mut scenario: Scenario, seed: u64, a: &TrainArgs) -> Result<()> {
    if let Some(i) = a.iterations {
        if i == 0 {
            bail!(ConfigError::Invalid {
                field: "iterations".into(),
                value: "0".into(),
                reason: "must be positive".into(),
            });
        }
        scenario.config.local_iterations = i;
    }
    let config = match &a.ppo {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let c: PpoConfig = serde_json::from_str(&text)
                .map_err(|e| ConfigError::Parse(e.to_string()))
                .with_context(|| format!("loading {}", path.display()))?;
            c.validate()?;
            c
        }
        None => PpoConfig::default(),
    };
    let rounds = a.rounds.unwrap_or(scenario.config.rounds);
    let jobs: Vec<(Variant, u64)> = a
        .variant
        .iter()
        .flat_map(|&v| seed_list(seed, a.seeds).into_iter().map(move |s| (v, s)))
        .collect();
    let runs = train_drl_many(&scenario, a.paradigm, &jobs, &config, rounds, cli.workers)?;
    for run in &runs {
        let stem = format!("drl_{}_seed{}", run.variant.slug(), run.seed);
        run.log.write_csv(create(&cli.out, &format!("{stem}.csv"))?)?;
        let mut f = create(&cli.out, &format!("{stem}_checkpoint.json"))?;
        std::io::Write::write_all(&mut f, run.checkpoint.as_bytes())?;
        let tail = (rounds / 6).max(1);
        println!(
            "{:<12} seed {}: mean objective over last {tail} rounds {:.4}",
            run.variant.to_string(),
            run.seed,
            run.log.tail_mean_objective(tail)
        );
    }
    Ok(())
}

fn verify_cmd(cli: &Cli, scenario: &Scenario, seed: u64, a: &VerifyArgs) -> Result<(), Failure> {
    let budget = a.budget.or(a.rounds).unwrap_or(match a.level {
        VerifySuite::Theorems => 200,
        VerifySuite::Bounds | VerifySuite::ClosedForms => 100,
    });
    let report = verify(a.level, budget, scenario, seed).map_err(anyhow::Error::from)?;
    for c in &report.checks {
        println!("{c}");
    }
    let name = match a.level {
        VerifySuite::Theorems => "verify_theorems.csv",
        VerifySuite::Bounds => "verify_bounds.csv",
        VerifySuite::ClosedForms => "verify_closed_forms.csv",
    };
    let write = || -> Result<()> { Ok(write_rows_csv(create(&cli.out, name)?, &report.checks)?) };
    write()?;
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<_> = report.checks.iter().filter(|c| c.gating && !c.passed()).map(|c| c.name.clone()).collect();
        Err(Failure::Certification(failed.join(", ")))
    }
}

fn export_trajectory(cli: &Cli, scenario: &Scenario, seed: u64, a: &TrajectoryArgs) -> Result<()> {
    let channel = MobileChannel::new(scenario, seed)?;
    let name = format!("trajectory_seed{seed}.csv");
    write_trajectory_csv(create(&cli.out, &name)?, &channel, a.slots)?;
    println!("wrote {} slots for {} clients to {}", a.slots, scenario.k(), cli.out.join(name).display());
    Ok(())
}
