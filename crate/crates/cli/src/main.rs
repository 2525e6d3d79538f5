//! `boidp` command-line tool.
//!
//! Experiment config keys (TOML; unknown keys are rejected):
//!
//! ```text
//! map = "map.toml"            # world map, relative to the config file
//! start = [x, y]
//! seed = 0
//! [domain]      name = "toy" | "push", plus domain parameters
//! [dataset]     path, size, rotation_copies
//! [rewards]     action_cost, obstacle_cost, goal_reward, gamma
//! [density]     neighbors, k_max, force_k, quantization_bins, ...
//! [planning]    states_per_round, rounds, round_tolerance, epsilon
//! [planning.pool]               kind = "halton" (size) | "grid" (per_dim)
//! [planning.sampling]           n_action_tries, max_attempts
//! [planning.planner]            max_trials, tolerance, depth_cap, record_trace
//! [planning.planner.selector]   kind, rounds, batch, lambda
//! [evaluation]  n_rollouts, max_steps
//! ```
//!
//! Map keys: `bounds = { lo, hi }`, `goal = { center, radius }`,
//! `inflation`, and `[[obstacles]]` entries of kind `rect` (`lo`, `hi`)
//! or `disc` (`center`, `radius`).
//!
//! Exit codes: 0 success, 2 config error, 3 planning failure.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use boidp::benchmarks::write_trajectories_csv;
use boidp::density::write_dataset_csv;
use boidp::experiment::{compare, Axis, ExperimentConfig, PolicyFile, Prepared};
use boidp::planner::SelectorKind;
use boidp::Error;
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "boidp", version, about = "Sampling-based stochastic motion planning with Bayesian-optimized actions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from the configured domain and write it as CSV.
    GenData(Common),
    /// Plan and write policy.json and stats.json.
    Plan(Common),
    /// Roll out a policy and write summary.json and trajectories.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Policy file written by `plan` (default: <out-dir>/policy.json).
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Plan and evaluate configs differing on one axis; write compare.csv.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: Axis,
        /// Axis values applied to a single config instead of listing configs.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Seeds per config (default: the config seed).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config; `compare` accepts several.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    selector: Option<SelectorKind>,
    #[arg(long)]
    force_k: Option<usize>,
    #[arg(long)]
    n_states: Option<usize>,
}

enum Failure {
    Config(String),
    Planning(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::Json(_) => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Planning(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Config(format!("{}: {e}", path.display()))
}

impl Common {
    fn load(&self, path: &Path) -> Result<ExperimentConfig, Failure> {
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(kind) = self.selector {
            cfg.planning.planner.selector.kind = kind;
        }
        if let Some(k) = self.force_k {
            cfg.density.force_k = Some(k);
        }
        if let Some(n) = self.n_states {
            cfg.planning.states_per_round = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn single(&self) -> Result<ExperimentConfig, Failure> {
        match self.config.as_slice() {
            [path] => self.load(path),
            _ => Err(Failure::Config("this command takes exactly one --config".into())),
        }
    }

    fn out(&self, name: &str) -> Result<PathBuf, Failure> {
        fs::create_dir_all(&self.out_dir).map_err(io_err(&self.out_dir))?;
        Ok(self.out_dir.join(name))
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w).map_err(io_err(path))?;
    Ok(())
}

fn gen_data(common: &Common) -> Result<(), Failure> {
    let cfg = common.single()?;
    let path = match &cfg.dataset.path {
        Some(p) => p.clone(),
        None => common.out("dataset.csv")?,
    };
    let records = cfg.generate_dataset()?;
    let mut bytes = Vec::new();
    write_dataset_csv(&mut bytes, &records)?;
    fs::write(&path, &bytes).map_err(io_err(&path))?;
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    println!("records {}", records.len());
    println!("sha256 {hex}");
    println!("wrote {}", path.display());
    Ok(())
}

fn plan(common: &Common) -> Result<(), Failure> {
    let cfg = common.single()?;
    let domain = cfg.domain;
    let prepared = Prepared::from_config(cfg)?;
    let outcome = prepared.plan()?;
    let policy_path = common.out("policy.json")?;
    write_json(&policy_path, &PolicyFile::new(&domain, &outcome))?;
    let stats_path = common.out("stats.json")?;
    write_json(&stats_path, &outcome.stats)?;
    println!(
        "states {} visited {:.4} V(s0) {:.4}",
        outcome.stats.n_states, outcome.stats.visited_fraction, outcome.v[0]
    );
    println!("wrote {} and {}", policy_path.display(), stats_path.display());
    Ok(())
}

fn evaluate(common: &Common, policy: Option<&Path>) -> Result<(), Failure> {
    let cfg = common.single()?;
    let policy_path = match policy {
        Some(p) => p.to_path_buf(),
        None => common.out_dir.join("policy.json"),
    };
    let text = fs::read_to_string(&policy_path).map_err(io_err(&policy_path))?;
    let file: PolicyFile = serde_json::from_str(&text).map_err(Error::from)?;
    let prepared = Prepared::from_config(cfg)?;
    let set = file.state_set(&prepared.config.domain, &prepared.map)?;
    let (summary, rollouts) = prepared.evaluate(&set, &file.actions, &file.values)?;
    let summary_path = common.out("summary.json")?;
    write_json(&summary_path, &summary)?;
    let traj_path = common.out("trajectories.csv")?;
    let traj = fs::File::create(&traj_path).map_err(io_err(&traj_path))?;
    write_trajectories_csv(BufWriter::new(traj), &rollouts, prepared.space.control_dim())?;
    println!(
        "success {:.4} collision {:.4} timeout {:.4} reward {:.4}",
        summary.success_rate, summary.collision_rate, summary.timeout_rate, summary.mean_discounted_reward
    );
    println!("wrote {} and {}", summary_path.display(), traj_path.display());
    Ok(())
}

fn with_axis_value(mut cfg: ExperimentConfig, axis: Axis, value: &str) -> Result<ExperimentConfig, Failure> {
    let bad = || Failure::Config(format!("bad {axis:?} value `{value}`"));
    match axis {
        Axis::Selector => cfg.planning.planner.selector.kind = value.parse().map_err(|_| bad())?,
        Axis::K => cfg.density.force_k = Some(value.parse().map_err(|_| bad())?),
        Axis::NStates => cfg.planning.states_per_round = value.parse().map_err(|_| bad())?,
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_compare(common: &Common, axis: Axis, values: &[String], seeds: &[u64]) -> Result<(), Failure> {
    let configs: Vec<ExperimentConfig> = if values.is_empty() {
        common.config.iter().map(|p| common.load(p)).collect::<Result<_, _>>()?
    } else {
        let base = common.single()?;
        values.iter().map(|v| with_axis_value(base.clone(), axis, v)).collect::<Result<_, _>>()?
    };
    let seeds = if seeds.is_empty() { vec![configs[0].seed] } else { seeds.to_vec() };
    let rows = compare(&configs, axis, &seeds)?;
    let path = common.out("compare.csv")?;
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    for row in &rows {
        w.serialize(row).map_err(Error::from)?;
    }
    w.flush().map_err(io_err(&path))?;
    for row in &rows {
        println!(
            "{}={} seed={} success {:.4} reward {:.4} visited {:.4} actions/state {:.1}",
            row.axis, row.axis_value, row.seed, row.success_rate, row.reward_mean, row.visited_fraction, row.actions_per_state
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = match &cli.command {
        Command::GenData(c) | Command::Plan(c) => c,
        Command::Evaluate { common, .. } | Command::Compare { common, .. } => common,
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    match &cli.command {
        Command::GenData(c) => gen_data(c),
        Command::Plan(c) => plan(c),
        Command::Evaluate { common, policy } => evaluate(common, policy.as_deref()),
        Command::Compare { common, axis, values, seeds } => run_compare(common, *axis, values, seeds),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Planning(msg)) => {
            eprintln!("planning failed: {msg}");
            ExitCode::from(3)
        }
    }
}
