//! Experiment configuration files and the plan / evaluate / compare
//! pipeline behind the command-line tool.
//!
//! The top-level `seed` drives everything: dataset generation, density
//! fitting, state sampling, action selection and rollouts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{evaluate_policy, generate_dataset, Domain, EvaluationSummary};
use crate::density::{read_dataset_csv, DatasetModel, LocalModelConfig};
use crate::domain::{ActionSpace, ActionVec, DatasetRecord, RewardSpec, StateVec, WorldMap};
use crate::error::{Error, Result};
use crate::planner::{
    boidp, displacement_quantile, greedy_fallback, mix_seed, BoidpConfig, BoidpInput, PlanOutcome, Rollout,
    SampledProblem, SelectorKind,
};
use crate::sampling::SampledStateSet;

pub const POLICY_SCHEMA_VERSION: u32 = 1;
pub const COMPARE_SCHEMA_VERSION: u32 = 1;
/// Quantile of displacement norms used as the per-action progress bound.
pub const DELTA_MAX_QUANTILE: f64 = 0.99;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// CSV file to read (plan, evaluate) or write (gen-data). Relative to
    /// the config file. Without it the dataset is generated in memory.
    pub path: Option<PathBuf>,
    pub size: usize,
    pub rotation_copies: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { path: None, size: 200_000, rotation_copies: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub n_rollouts: usize,
    pub max_steps: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { n_rollouts: 500, max_steps: 500 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    /// Map file, relative to the config file.
    pub map: PathBuf,
    pub start: [f64; 2],
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub rewards: RewardSpec,
    #[serde(default)]
    pub density: LocalModelConfig,
    #[serde(default)]
    pub planning: BoidpConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

impl ExperimentConfig {
    /// Parses a config; relative paths are resolved against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.map = base.join(&cfg.map);
        if let Some(p) = &cfg.dataset.path {
            cfg.dataset.path = Some(base.join(p));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.map.is_file() {
            return Err(Error::Config(format!("map file {} does not exist", self.map.display())));
        }
        self.rewards.validate()?;
        self.planning.planner.selector.validate()?;
        if self.density.force_k == Some(0) || self.density.k_max == 0 {
            return Err(Error::Config("component counts must be at least 1".into()));
        }
        if self.dataset.size == 0 || self.planning.states_per_round < 2 || self.planning.rounds == 0 {
            return Err(Error::Config("dataset size, states per round and rounds must be positive".into()));
        }
        if self.evaluation.n_rollouts == 0 {
            return Err(Error::Config("n_rollouts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn load_map(&self) -> Result<WorldMap> {
        let text =
            fs::read_to_string(&self.map).map_err(|e| Error::Config(format!("{}: {e}", self.map.display())))?;
        WorldMap::from_toml_str(&text)
    }

    /// Dataset generated from the config alone.
    pub fn generate_dataset(&self) -> Result<Vec<DatasetRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, 1));
        generate_dataset(&self.domain, self.dataset.size, self.dataset.rotation_copies, &mut rng)
    }

    /// Reads the dataset file if configured, otherwise generates it.
    pub fn dataset(&self) -> Result<Vec<DatasetRecord>> {
        match &self.dataset.path {
            Some(p) => {
                let file = fs::File::open(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                read_dataset_csv(std::io::BufReader::new(file))
            }
            None => self.generate_dataset(),
        }
    }

    fn seeded(&self) -> (LocalModelConfig, BoidpConfig) {
        let mut density = self.density.clone();
        density.seed = self.seed;
        let mut planning = self.planning.clone();
        planning.planner.seed = self.seed;
        (density, planning)
    }

    /// Flattened `key.path → value` view used for axis checks.
    pub fn flatten(&self) -> Result<BTreeMap<String, String>> {
        let value = serde_json::to_value(self)?;
        let mut out = BTreeMap::new();
        flatten_into("", &value, &mut out);
        Ok(out)
    }
}

fn flatten_into(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, String>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, x, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.to_string());
        }
    }
}

/// Everything needed to plan and evaluate.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub map: WorldMap,
    pub space: ActionSpace,
    pub model: DatasetModel,
    pub delta_max: f64,
    pub start: StateVec,
}

impl Prepared {
    pub fn new(config: ExperimentConfig, records: Vec<DatasetRecord>) -> Result<Self> {
        let map = config.load_map()?;
        let space = config.domain.space();
        let delta_max = displacement_quantile(&records, DELTA_MAX_QUANTILE)?;
        let (density, _) = config.seeded();
        let model = DatasetModel::new(Arc::new(records), space.clone(), density)?;
        let start = StateVec::xy(config.start[0], config.start[1]);
        Ok(Self { config, map, space, model, delta_max, start })
    }

    pub fn from_config(config: ExperimentConfig) -> Result<Self> {
        let records = config.dataset()?;
        Self::new(config, records)
    }

    pub fn plan(&self) -> Result<PlanOutcome> {
        let (_, planning) = self.config.seeded();
        let input = BoidpInput {
            map: &self.map,
            space: &self.space,
            spec: self.config.rewards,
            model: &self.model,
            sampler: &self.model,
            start: self.start.clone(),
            delta_max: self.delta_max,
        };
        boidp(&input, &planning)
    }

    /// Rolls out a policy over `set` against the true simulator. States
    /// without an action fall back to one-step lookahead with `values`.
    pub fn evaluate(
        &self,
        set: &SampledStateSet,
        policy: &[Option<ActionVec>],
        values: &[f64],
    ) -> Result<(EvaluationSummary, Vec<Rollout>)> {
        if values.len() != set.len() {
            return Err(Error::DimensionMismatch { expected: set.len(), got: values.len() });
        }
        // Fallback actions are random, so their transitions are not worth
        // caching; a fresh problem per call keeps memory flat.
        let fallback = |s: usize, rng: &mut dyn RngCore| {
            let problem = SampledProblem::new(
                set,
                &self.model,
                &self.map,
                &self.space,
                self.config.rewards,
                self.config.planning.pool.clone(),
                self.config.seed,
                self.config.planning.epsilon,
            );
            greedy_fallback(&problem, values, s, rng)
        };
        let ev = &self.config.evaluation;
        evaluate_policy(
            policy,
            set,
            &self.config.domain,
            &self.map,
            &self.config.rewards,
            &fallback,
            &self.start,
            ev.n_rollouts,
            ev.max_steps,
            mix_seed(self.config.seed, 2),
        )
    }
}

/// Serialized planner output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub schema_version: u32,
    pub domain: String,
    pub states: Vec<Vec<f64>>,
    pub boundary: Vec<bool>,
    pub actions: Vec<Option<ActionVec>>,
    pub values: Vec<f64>,
    pub h_u: Vec<f64>,
}

impl PolicyFile {
    pub fn new(domain: &Domain, outcome: &PlanOutcome) -> Self {
        let set = &outcome.set;
        Self {
            schema_version: POLICY_SCHEMA_VERSION,
            domain: domain.name().into(),
            states: set.states().iter().map(|s| s.coords().to_vec()).collect(),
            boundary: (0..set.len()).map(|i| set.is_boundary(i)).collect(),
            actions: outcome.policy.clone(),
            values: outcome.v.clone(),
            h_u: outcome.h_u.clone(),
        }
    }

    /// Checks the policy against a domain and rebuilds the state set.
    pub fn state_set(&self, domain: &Domain, map: &WorldMap) -> Result<SampledStateSet> {
        if self.domain != domain.name() {
            return Err(Error::Config(format!("policy is for domain `{}`, config for `{}`", self.domain, domain.name())));
        }
        let n = self.states.len();
        if self.boundary.len() != n || self.actions.len() != n || self.values.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.actions.len() });
        }
        let fd = domain.space().feature_dim();
        if let Some(a) = self.actions.iter().flatten().find(|a| a.features().len() != fd) {
            return Err(Error::DimensionMismatch { expected: fd, got: a.features().len() });
        }
        let states = self.states.iter().map(|c| StateVec::new(c.clone())).collect::<Result<Vec<_>>>()?;
        SampledStateSet::from_states(states, self.boundary.clone(), map)
    }
}

/// Result of planning and evaluating one configuration.
pub struct CellResult {
    pub outcome: PlanOutcome,
    pub summary: EvaluationSummary,
    pub rollouts: Vec<Rollout>,
    pub wall_time: f64,
}

pub fn run_cell(config: &ExperimentConfig) -> Result<CellResult> {
    let t0 = Instant::now();
    let prepared = Prepared::from_config(config.clone())?;
    let outcome = prepared.plan()?;
    let (summary, rollouts) = prepared.evaluate(&outcome.set, &outcome.policy, &outcome.v)?;
    Ok(CellResult { outcome, summary, rollouts, wall_time: t0.elapsed().as_secs_f64() })
}

/// The setting varied by a comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Selector,
    K,
    NStates,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selector" => Ok(Axis::Selector),
            "K" | "k" => Ok(Axis::K),
            "n_states" => Ok(Axis::NStates),
            _ => Err(Error::Config(format!("unknown axis `{s}` (selector, K, n_states)"))),
        }
    }
}

impl Axis {
    fn keys(self) -> &'static [&'static str] {
        match self {
            Axis::Selector => &["planning.planner.selector.kind"],
            Axis::K => &["density.force_k"],
            Axis::NStates => &["planning.states_per_round"],
        }
    }

    pub fn value(self, cfg: &ExperimentConfig) -> String {
        match self {
            Axis::Selector => match cfg.planning.planner.selector.kind {
                SelectorKind::Sequential => "sequential",
                SelectorKind::Batch => "batch",
                SelectorKind::Random => "random",
                SelectorKind::Exhaustive => "exhaustive",
            }
            .into(),
            Axis::K => cfg.density.force_k.map_or("bic".into(), |k| k.to_string()),
            Axis::NStates => cfg.planning.states_per_round.to_string(),
        }
    }
}

/// Rejects config lists that differ anywhere except on `axis` (and the seed).
pub fn check_single_axis(configs: &[ExperimentConfig], axis: Axis) -> Result<()> {
    if configs.len() < 2 {
        return Err(Error::Config("compare needs at least two configs".into()));
    }
    let skip = |k: &str| k == "seed" || axis.keys().contains(&k);
    let flat: Vec<BTreeMap<String, String>> = configs.iter().map(|c| c.flatten()).collect::<Result<_>>()?;
    let mut differing = std::collections::BTreeSet::new();
    for other in &flat[1..] {
        for key in flat[0].keys().chain(other.keys()) {
            if !skip(key) && flat[0].get(key) != other.get(key) {
                differing.insert(key.clone());
            }
        }
    }
    if !differing.is_empty() {
        let keys: Vec<String> = differing.into_iter().collect();
        return Err(Error::Config(format!("configs differ off the {axis:?} axis in: {}", keys.join(", "))));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub schema_version: u32,
    pub axis: String,
    pub axis_value: String,
    pub seed: u64,
    pub reward_mean: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub visited_fraction: f64,
    pub actions_per_state: f64,
    pub v_s0: f64,
    pub wall_time: f64,
}

/// Plans and evaluates every `(config, seed)` cell in parallel.
pub fn compare(configs: &[ExperimentConfig], axis: Axis, seeds: &[u64]) -> Result<Vec<CompareRow>> {
    check_single_axis(configs, axis)?;
    let cells: Vec<(usize, u64)> = (0..configs.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    cells
        .par_iter()
        .map(|&(c, seed)| {
            let cfg = ExperimentConfig { seed, ..configs[c].clone() };
            let r = run_cell(&cfg)?;
            Ok(CompareRow {
                schema_version: COMPARE_SCHEMA_VERSION,
                axis: format!("{axis:?}"),
                axis_value: axis.value(&cfg),
                seed,
                reward_mean: r.summary.mean_discounted_reward,
                success_rate: r.summary.success_rate,
                collision_rate: r.summary.collision_rate,
                visited_fraction: r.outcome.stats.visited_fraction,
                actions_per_state: r.outcome.stats.actions_per_state_mean,
                v_s0: r.outcome.v[0],
                wall_time: r.wall_time,
            })
        })
        .collect()
}
