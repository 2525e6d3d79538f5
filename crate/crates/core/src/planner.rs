//! RTDP over the sampled state set with GP-guided Bellman maximization,
//! the outer sample/plan loop, and policy execution.
//!
//! Goal states and the collision state are absorbing with value 0; their
//! payoffs arrive through the transition reward. Values start at the
//! per-state upper bound `h_u` and only decrease.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    default_kernel, select_batch, select_exhaustive, select_random, select_sequential, CandidatePool, GuidedParams,
    Selection,
};
use crate::density::{DisplacementSampler, LocalModel};
use crate::domain::{exists_collision, reward, ActionSpace, ActionVec, DatasetRecord, NextState, RewardSpec, StateVec, WorldMap};
use crate::error::{Error, Result};
use crate::sampling::{sample_states, SampledStateSet, SamplingConfig};
use crate::transition::{transition_model, DiscreteTransition, Successor, TransitionCache, TransitionCounters};

pub const STATS_SCHEMA_VERSION: u32 = 1;
/// Maximum trial length.
pub const DEPTH_CAP: usize = 200;
/// Consecutive trials below tolerance needed to stop.
pub const QUIET_TRIALS: usize = 5;
/// Slack on `V ≤ h_u`.
pub const VALUE_SLACK: f64 = 1e-6;
/// Random actions tried when the policy is undefined at a state.
pub const FALLBACK_POOL: usize = 32;

/// SplitMix64 combination of two seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A discrete-state MDP with continuous actions as seen by the planner.
pub trait PlanningProblem: Sync {
    fn n_states(&self) -> usize;
    /// Absorbing states with value 0.
    fn is_terminal(&self, s: usize) -> bool;
    fn transition(&self, s: usize, a: &ActionVec) -> Result<Arc<DiscreteTransition>>;
    fn reward(&self, s: usize, a: &ActionVec, next: Successor) -> f64;
    fn discount(&self, a: &ActionVec) -> f64;
    /// Finite pool the maximization at `s` runs over.
    fn candidates(&self, s: usize) -> Result<Vec<ActionVec>>;
    /// Feature-space box of the actions.
    fn feature_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn random_action(&self, rng: &mut dyn RngCore) -> ActionVec;
}

/// The planning problem over a sampled state set with lazily estimated transitions.
pub struct SampledProblem<'a> {
    pub set: &'a SampledStateSet,
    pub model: &'a dyn LocalModel,
    pub map: &'a WorldMap,
    pub space: &'a ActionSpace,
    pub spec: RewardSpec,
    pub pool: CandidatePool,
    pub pool_seed: u64,
    pub epsilon: f64,
    pub cache: TransitionCache,
    pub counters: TransitionCounters,
}

impl<'a> SampledProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        set: &'a SampledStateSet,
        model: &'a dyn LocalModel,
        map: &'a WorldMap,
        space: &'a ActionSpace,
        spec: RewardSpec,
        pool: CandidatePool,
        pool_seed: u64,
        epsilon: f64,
    ) -> Self {
        Self {
            set,
            model,
            map,
            space,
            spec,
            pool,
            pool_seed,
            epsilon,
            cache: TransitionCache::new(),
            counters: TransitionCounters::default(),
        }
    }
}

impl PlanningProblem for SampledProblem<'_> {
    fn n_states(&self) -> usize {
        self.set.len()
    }

    fn is_terminal(&self, s: usize) -> bool {
        self.set.is_goal(s)
    }

    fn transition(&self, s: usize, a: &ActionVec) -> Result<Arc<DiscreteTransition>> {
        self.cache.lookup_or_compute(self.set.generation(), s, a, || {
            transition_model(s, a, self.set, self.model, self.map, self.epsilon, Some(&self.counters))
        })
    }

    fn reward(&self, _s: usize, _a: &ActionVec, next: Successor) -> f64 {
        match next {
            Successor::Obstacle => self.spec.obstacle_cost,
            Successor::State(j) if self.set.is_goal(j) => self.spec.goal_reward,
            Successor::State(_) => self.spec.action_cost,
        }
    }

    fn discount(&self, a: &ActionVec) -> f64 {
        self.spec.discount(a.duration)
    }

    fn candidates(&self, s: usize) -> Result<Vec<ActionVec>> {
        self.pool.build(self.space, mix_seed(self.pool_seed, s as u64))
    }

    fn feature_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.space.feature_lo(), self.space.feature_hi())
    }

    fn random_action(&self, rng: &mut dyn RngCore) -> ActionVec {
        self.space.sample_uniform(rng)
    }
}

/// `Σ P(s'|s,a) (R(s'|s,a) + γ^{Δt} V(s'))` with terminal values 0.
pub fn q_value(problem: &dyn PlanningProblem, v: &[f64], s: usize, a: &ActionVec) -> Result<f64> {
    let t = problem.transition(s, a)?;
    let g = problem.discount(a);
    let mut q = 0.0;
    for (succ, p) in t.outcomes() {
        if p == 0.0 {
            continue;
        }
        let next = match succ {
            Successor::State(j) if !problem.is_terminal(j) => v[j],
            _ => 0.0,
        };
        q += p * (problem.reward(s, a, succ) + g * next);
    }
    Ok(q)
}

/// 99th percentile of the dataset's displacement norms.
pub fn displacement_quantile(records: &[DatasetRecord], q: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut norms: Vec<f64> = records.iter().map(|r| r.delta.iter().map(|d| d * d).sum::<f64>().sqrt()).collect();
    norms.sort_by(f64::total_cmp);
    let idx = ((q * norms.len() as f64).ceil() as usize).clamp(1, norms.len()) - 1;
    Ok(norms[idx])
}

/// Upper bound on the optimal value at each state.
///
/// On the complete Euclidean graph the shortest path to the goal set is the
/// direct edge to the nearest goal state, of length `ℓ`. With at most
/// `delta_max` progress per action, reaching the goal takes at least
/// `n = ⌈ℓ/delta_max⌉` actions, so
/// `h_u = Σ_{i<n−1} γ^{i·t_max}·c + γ^{(n−1)·t_min}·R_goal`, the cost terms
/// discounted as much as possible and the goal term as little as possible.
/// Paths that never reach the goal earn at most `c`, so `h_u ≥ c`. Goal
/// states get `R_goal`.
pub fn compute_h_u(set: &SampledStateSet, spec: &RewardSpec, delta_max: f64, t_min: f64, t_max: f64) -> Result<Vec<f64>> {
    if !(delta_max > 0.0) || !(t_min >= 0.0 && t_max >= t_min) {
        return Err(Error::InvalidArgument("need delta_max > 0 and 0 <= t_min <= t_max".into()));
    }
    let goals: Vec<usize> = (0..set.len()).filter(|&i| set.is_goal(i)).collect();
    if goals.is_empty() {
        return Err(Error::NoGoalState);
    }
    let r = spec.gamma.powf(t_max);
    Ok((0..set.len())
        .map(|i| {
            if set.is_goal(i) {
                return spec.goal_reward;
            }
            let s = set.state(i).coords();
            let l = goals
                .iter()
                .map(|&g| s.iter().zip(set.state(g).coords()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            let n = ((l / delta_max).ceil() as i64).max(1);
            let costs = spec.action_cost * (1.0 - r.powi((n - 1) as i32)) / (1.0 - r);
            let h = costs + spec.gamma.powf((n - 1) as f64 * t_min) * spec.goal_reward;
            h.max(spec.action_cost)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorKind {
    Sequential,
    Batch,
    Random,
    Exhaustive,
}

impl std::str::FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Self::Sequential),
            "batch" => Ok(Self::Batch),
            "random" => Ok(Self::Random),
            "exhaustive" => Ok(Self::Exhaustive),
            _ => Err(Error::Config(format!("unknown selector `{s}`"))),
        }
    }
}

/// Action-selection settings. Random selection gets the same budget as
/// batch selection, `rounds × batch` evaluations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectorConfig {
    pub kind: SelectorKind,
    pub rounds: usize,
    pub batch: usize,
    pub lambda: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self { kind: SelectorKind::Batch, rounds: 10, batch: 8, lambda: 1.0 }
    }
}

impl SelectorConfig {
    pub fn budget(&self, pool: usize) -> usize {
        match self.kind {
            SelectorKind::Sequential => self.rounds,
            SelectorKind::Batch | SelectorKind::Random => self.rounds * self.batch,
            SelectorKind::Exhaustive => pool,
        }
        .min(pool)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.batch == 0 {
            return Err(Error::Config("selector rounds and batch must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config("selector lambda must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub selector: SelectorConfig,
    pub max_trials: usize,
    /// Largest value change per trial still counted as quiet; `inf` runs one trial.
    pub tolerance: f64,
    pub depth_cap: usize,
    pub seed: u64,
    /// Keep every `(state, value)` update for auditing.
    pub record_trace: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            selector: SelectorConfig::default(),
            max_trials: 500,
            tolerance: 1e-3,
            depth_cap: DEPTH_CAP,
            seed: 0,
            record_trace: false,
        }
    }
}

/// Cached best action at a state, valid while the successor values it was
/// computed from are unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimisticEntry {
    pub action: ActionVec,
    pub q: f64,
    pub snapshot: Vec<(usize, u64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub trials: usize,
    pub backups: usize,
    pub optimistic_hits: usize,
    pub selector_runs: usize,
    pub selector_evaluations: usize,
    /// `h_u` raised to a larger observed value inside a selector.
    pub h_u_lifts: usize,
    /// Backups whose best Q exceeded `h_u` by more than the slack.
    pub h_u_violations: usize,
    /// Backups whose best Q exceeded the current value; the value was kept.
    pub monotone_clamps: usize,
}

#[derive(Clone, Debug)]
pub struct PlanState {
    pub v: Vec<f64>,
    pub h_u: Vec<f64>,
    pub policy: Vec<Option<ActionVec>>,
    pub optimistic: Vec<Option<OptimisticEntry>>,
    pub counters: Counters,
    pub trace: Vec<(usize, f64)>,
    visited: Vec<bool>,
    backups: Vec<u32>,
    distinct: Vec<HashSet<Vec<u64>>>,
    trial_delta: f64,
}

impl PlanState {
    /// Values start at `h_u`; terminal states hold 0.
    pub fn new(problem: &dyn PlanningProblem, h_u: Vec<f64>) -> Result<Self> {
        let n = problem.n_states();
        if h_u.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: h_u.len() });
        }
        let v = (0..n).map(|i| if problem.is_terminal(i) { 0.0 } else { h_u[i] }).collect();
        Ok(Self {
            v,
            h_u,
            policy: vec![None; n],
            optimistic: vec![None; n],
            counters: Counters::default(),
            trace: Vec::new(),
            visited: vec![false; n],
            backups: vec![0; n],
            distinct: vec![HashSet::new(); n],
            trial_delta: 0.0,
        })
    }

    pub fn visited(&self) -> impl Iterator<Item = usize> + '_ {
        self.visited.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| i)
    }

    pub fn visited_count(&self) -> usize {
        self.visited.iter().filter(|&&v| v).count()
    }

    /// Distinct actions evaluated at `s` across all backups.
    pub fn distinct_actions(&self, s: usize) -> usize {
        self.distinct[s].len()
    }

    /// One Bellman backup at non-terminal `s`.
    pub fn bellman_backup(
        &mut self,
        problem: &dyn PlanningProblem,
        cfg: &PlannerConfig,
        s: usize,
    ) -> Result<(ActionVec, f64)> {
        self.visited[s] = true;
        let n = self.backups[s];
        self.backups[s] += 1;
        self.counters.backups += 1;

        if let Some(e) = &self.optimistic[s] {
            if e.snapshot.iter().all(|&(j, bits)| self.v[j].to_bits() == bits) {
                let a = e.action.clone();
                let q = q_value(problem, &self.v, s, &a)?;
                self.counters.optimistic_hits += 1;
                self.update(s, q, cfg.record_trace);
                return Ok((a, q));
            }
        }

        let candidates = problem.candidates(s)?;
        let seed = mix_seed(cfg.seed, mix_seed(s as u64, n as u64));
        let selection = self.select(problem, &cfg.selector, s, &candidates, seed)?;
        self.counters.selector_runs += 1;
        self.counters.selector_evaluations += selection.history.len();
        self.counters.h_u_lifts += selection.h_u_lifts;
        for i in selection.evaluated() {
            self.distinct[s].insert(candidates[i].key());
        }

        let a = candidates[selection.best_index].clone();
        let q = selection.best_value;
        let t = problem.transition(s, &a)?;
        let snapshot = t
            .support
            .iter()
            .filter_map(|succ| match *succ {
                Successor::State(j) => Some((j, self.v[j].to_bits())),
                Successor::Obstacle => None,
            })
            .collect();
        self.optimistic[s] = Some(OptimisticEntry { action: a.clone(), q, snapshot });
        self.policy[s] = Some(a.clone());
        self.update(s, q, cfg.record_trace);
        Ok((a, q))
    }

    fn select(
        &self,
        problem: &dyn PlanningProblem,
        cfg: &SelectorConfig,
        s: usize,
        candidates: &[ActionVec],
        seed: u64,
    ) -> Result<Selection<f64>> {
        let v = &self.v;
        let eval = |i: usize| q_value(problem, v, s, &candidates[i]);
        let eval_batch = |idx: &[usize]| idx.par_iter().map(|&i| q_value(problem, v, s, &candidates[i])).collect();
        let budget = cfg.budget(candidates.len());
        match cfg.kind {
            SelectorKind::Exhaustive => select_exhaustive(candidates.len(), eval_batch),
            SelectorKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                select_random(candidates.len(), eval_batch, budget, &mut rng)
            }
            SelectorKind::Sequential | SelectorKind::Batch => {
                let (lo, hi) = problem.feature_bounds();
                let params = GuidedParams { kernel: default_kernel(&lo, &hi), h_u: self.h_u[s], lambda: cfg.lambda, seed };
                let features: Vec<Vec<f64>> = candidates.iter().map(|a| a.features()).collect();
                if cfg.kind == SelectorKind::Sequential {
                    select_sequential(&params, &features, eval, budget)
                } else {
                    let m = cfg.batch.min(features.len());
                    select_batch(&params, &features, eval_batch, cfg.rounds, m)
                }
            }
        }
    }

    fn update(&mut self, s: usize, q: f64, record: bool) {
        if q > self.h_u[s] + VALUE_SLACK {
            self.counters.h_u_violations += 1;
        }
        let old = self.v[s];
        let new = if q > old {
            self.counters.monotone_clamps += 1;
            old
        } else {
            q
        };
        self.v[s] = new;
        self.trial_delta = self.trial_delta.max((old - new).abs());
        if record {
            self.trace.push((s, new));
        }
    }

    /// One trial from `s0`: backups on the way down, then again on the way
    /// back up. Stops at terminal states, the collision state, a state
    /// already on the trial path, or the depth cap. Returns the largest
    /// value change.
    pub fn trial(
        &mut self,
        problem: &dyn PlanningProblem,
        cfg: &PlannerConfig,
        s0: usize,
        rng: &mut dyn RngCore,
    ) -> Result<f64> {
        self.trial_delta = 0.0;
        self.counters.trials += 1;
        let mut on_path = vec![false; self.v.len()];
        let mut path = Vec::new();
        let mut s = s0;
        while !problem.is_terminal(s) && !on_path[s] && path.len() < cfg.depth_cap {
            on_path[s] = true;
            path.push(s);
            let (a, _) = self.bellman_backup(problem, cfg, s)?;
            match problem.transition(s, &a)?.sample_with(rng.random()) {
                Successor::State(j) => s = j,
                Successor::Obstacle => break,
            }
        }
        for &s in path.iter().rev() {
            self.bellman_backup(problem, cfg, s)?;
        }
        Ok(self.trial_delta)
    }

    /// Trials from `s0` until the value change stays below the tolerance
    /// for several consecutive trials or the trial budget runs out.
    /// Returns the number of trials.
    pub fn rtdp(&mut self, problem: &dyn PlanningProblem, cfg: &PlannerConfig, s0: usize) -> Result<usize> {
        if problem.is_terminal(s0) {
            return Ok(0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, u64::MAX));
        let mut quiet = 0;
        let mut trials = 0;
        while trials < cfg.max_trials {
            let delta = self.trial(problem, cfg, s0, &mut rng)?;
            trials += 1;
            if cfg.tolerance == f64::INFINITY {
                break;
            }
            quiet = if delta < cfg.tolerance { quiet + 1 } else { 0 };
            if quiet >= QUIET_TRIALS {
                break;
            }
        }
        Ok(trials)
    }
}

/// Best of [`FALLBACK_POOL`] random actions by one-step lookahead.
pub fn greedy_fallback(problem: &dyn PlanningProblem, v: &[f64], s: usize, rng: &mut dyn RngCore) -> Result<ActionVec> {
    let mut best: Option<(f64, ActionVec)> = None;
    for _ in 0..FALLBACK_POOL {
        let a = problem.random_action(rng);
        let q = q_value(problem, v, s, &a)?;
        if best.as_ref().is_none_or(|(b, _)| q > *b) {
            best = Some((q, a));
        }
    }
    Ok(best.expect("fallback pool is not empty").1)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub n_states: usize,
    pub trials: usize,
    pub visited_states: usize,
    pub v_s0: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub schema_version: u32,
    pub n_states: usize,
    pub visited_states: usize,
    pub visited_fraction: f64,
    /// Mean over visited states of distinct actions evaluated.
    pub actions_per_state_mean: f64,
    /// Distinct actions evaluated → number of visited states.
    pub actions_per_state_histogram: BTreeMap<usize, usize>,
    pub counters: Counters,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub cache_hit_rate: f64,
    pub density_evaluations: usize,
    pub transition_fallbacks: usize,
    pub rounds: Vec<RoundStats>,
    pub v_s0_differences: Vec<f64>,
}

impl PlanStats {
    pub fn collect(state: &PlanState, problem: Option<&SampledProblem<'_>>, rounds: Vec<RoundStats>) -> Self {
        let n = state.v.len();
        let visited: Vec<usize> = state.visited().collect();
        let mut hist = BTreeMap::new();
        for &s in &visited {
            *hist.entry(state.distinct_actions(s)).or_insert(0) += 1;
        }
        let total: usize = visited.iter().map(|&s| state.distinct_actions(s)).sum();
        let (hits, misses, density, fallbacks) = problem.map_or((0, 0, 0, 0), |p| {
            use std::sync::atomic::Ordering::Relaxed;
            (p.cache.hits(), p.cache.misses(), p.counters.density_evaluations.load(Relaxed), p.counters.fallbacks.load(Relaxed))
        });
        let diffs = rounds.windows(2).map(|w| (w[1].v_s0 - w[0].v_s0).abs()).collect();
        Self {
            schema_version: STATS_SCHEMA_VERSION,
            n_states: n,
            visited_states: visited.len(),
            visited_fraction: if n == 0 { 0.0 } else { visited.len() as f64 / n as f64 },
            actions_per_state_mean: if visited.is_empty() { 0.0 } else { total as f64 / visited.len() as f64 },
            actions_per_state_histogram: hist,
            counters: state.counters.clone(),
            cache_hits: hits,
            cache_misses: misses,
            cache_hit_rate: if hits + misses == 0 { 0.0 } else { hits as f64 / (hits + misses) as f64 },
            density_evaluations: density,
            transition_fallbacks: fallbacks,
            rounds,
            v_s0_differences: diffs,
        }
    }
}

/// Outer-loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoidpConfig {
    /// States added per round.
    pub states_per_round: usize,
    pub rounds: usize,
    /// Stop once `|ΔV(s0)|` between rounds falls below this.
    pub round_tolerance: f64,
    pub epsilon: f64,
    pub pool: CandidatePool,
    pub sampling: SamplingConfig,
    pub planner: PlannerConfig,
}

impl Default for BoidpConfig {
    fn default() -> Self {
        Self {
            states_per_round: 1000,
            rounds: 1,
            round_tolerance: 1e-2,
            epsilon: crate::transition::DEFAULT_EPSILON,
            pool: CandidatePool::default(),
            sampling: SamplingConfig::default(),
            planner: PlannerConfig::default(),
        }
    }
}

/// What the outer loop plans with.
pub struct BoidpInput<'a> {
    pub map: &'a WorldMap,
    pub space: &'a ActionSpace,
    pub spec: RewardSpec,
    pub model: &'a dyn LocalModel,
    pub sampler: &'a dyn DisplacementSampler,
    pub start: StateVec,
    /// Largest per-action displacement assumed by `h_u`.
    pub delta_max: f64,
}

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub set: SampledStateSet,
    pub v: Vec<f64>,
    pub h_u: Vec<f64>,
    pub policy: Vec<Option<ActionVec>>,
    pub stats: PlanStats,
    /// Every transition built in the final round.
    pub transitions: Vec<(usize, Arc<DiscreteTransition>)>,
    pub trace: Vec<(usize, f64)>,
}

/// Alternates state sampling and RTDP from the start state (index 0) until
/// `V(s0)` settles or the round cap is reached. Each round plans from
/// scratch on the grown set.
pub fn boidp(input: &BoidpInput<'_>, cfg: &BoidpConfig) -> Result<PlanOutcome> {
    if cfg.rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    cfg.planner.selector.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.planner.seed);
    let mut set = SampledStateSet::new(input.start.clone(), input.map)?;
    let mut rounds: Vec<RoundStats> = Vec::new();
    loop {
        sample_states(cfg.states_per_round, &mut set, input.map, input.space, input.sampler, &mut rng, &cfg.sampling)?;
        let h_u = compute_h_u(&set, &input.spec, input.delta_max, input.space.t_min, input.space.t_max)?;
        let problem = SampledProblem::new(
            &set,
            input.model,
            input.map,
            input.space,
            input.spec,
            cfg.pool.clone(),
            cfg.planner.seed,
            cfg.epsilon,
        );
        let mut state = PlanState::new(&problem, h_u)?;
        let trials = state.rtdp(&problem, &cfg.planner, 0)?;
        rounds.push(RoundStats { n_states: set.len(), trials, visited_states: state.visited_count(), v_s0: state.v[0] });
        let settled = rounds.len() >= 2 && {
            let k = rounds.len();
            (rounds[k - 1].v_s0 - rounds[k - 2].v_s0).abs() < cfg.round_tolerance
        };
        if settled || rounds.len() >= cfg.rounds {
            let stats = PlanStats::collect(&state, Some(&problem), rounds);
            let transitions = problem.cache.transitions();
            drop(problem);
            return Ok(PlanOutcome {
                set,
                v: state.v,
                h_u: state.h_u,
                policy: state.policy,
                stats,
                transitions,
                trace: state.trace,
            });
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: Vec<f64>,
    pub action: ActionVec,
    pub reward: f64,
    /// Sampled state whose policy was used.
    pub nearest: usize,
    /// The policy was undefined there and a fallback action was used.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub steps: Vec<Step>,
    pub final_state: Vec<f64>,
    pub outcome: Outcome,
    pub discounted_reward: f64,
}

/// Runs the policy in a simulator from `start`, acting at each step as the
/// nearest non-boundary sampled state would.
#[allow(clippy::too_many_arguments)]
pub fn execute_policy(
    policy: &[Option<ActionVec>],
    set: &SampledStateSet,
    map: &WorldMap,
    spec: &RewardSpec,
    simulate: &dyn Fn(&StateVec, &ActionVec, &mut dyn RngCore) -> StateVec,
    fallback: &dyn Fn(usize, &mut dyn RngCore) -> Result<ActionVec>,
    start: &StateVec,
    rng: &mut dyn RngCore,
    max_steps: usize,
) -> Result<Rollout> {
    if policy.len() != set.len() {
        return Err(Error::DimensionMismatch { expected: set.len(), got: policy.len() });
    }
    let mut s = start.clone();
    let mut steps = Vec::new();
    let mut total = 0.0;
    let mut discount = 1.0;
    let outcome = loop {
        if map.in_goal(&s) {
            break Outcome::Success;
        }
        if steps.len() >= max_steps {
            break Outcome::Timeout;
        }
        let i = set.nearest_where(&s, |i| !set.is_boundary(i)).unwrap_or_else(|| set.nearest(&s));
        let (a, used_fallback) = match &policy[i] {
            Some(a) => (a.clone(), false),
            None => (fallback(i, rng)?, true),
        };
        let next = simulate(&s, &a, rng);
        let collided = exists_collision(&s, &a, &next, map);
        let r = reward(&s, &a, if collided { NextState::Obstacle } else { NextState::State(&next) }, spec, map);
        total += discount * r;
        discount *= spec.discount(a.duration);
        steps.push(Step { state: s.coords().to_vec(), action: a, reward: r, nearest: i, fallback: used_fallback });
        if collided {
            break Outcome::Collision;
        }
        s = next;
    };
    Ok(Rollout { steps, final_state: s.coords().to_vec(), outcome, discounted_reward: total })
}
