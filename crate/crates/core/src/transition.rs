//! Discrete next-state distributions over the sampled states plus the
//! collision pseudo-state, built from a local displacement density.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dashmap::DashMap;

use crate::density::LocalModel;
use crate::domain::{exists_collision, ActionVec, WorldMap};
use crate::error::{Error, Result};
use crate::sampling::SampledStateSet;

/// Default density threshold for candidate next states.
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// A next state: a sampled state index or the terminal collision state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Successor {
    State(usize),
    Obstacle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteTransition {
    /// Sampled states in index order, followed by [`Successor::Obstacle`].
    pub support: Vec<Successor>,
    pub probs: Vec<f64>,
    /// Unnormalized density of each support entry before folding
    /// (0 for the obstacle entry).
    pub densities: Vec<f64>,
    /// Which support states had their mass moved to the obstacle entry.
    pub collided: Vec<bool>,
    /// No sampled state exceeded the threshold; all mass went to the state
    /// nearest to the mean displacement.
    pub fallback: bool,
}

impl DiscreteTransition {
    /// Normalizes `densities` over `states`, folding collided mass onto the
    /// obstacle entry.
    pub fn from_densities(states: Vec<usize>, densities: Vec<f64>, collided: Vec<bool>) -> Result<Self> {
        let total: f64 = densities.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidArgument(format!("transition mass {total} is not positive")));
        }
        let mut probs = Vec::with_capacity(states.len() + 1);
        let mut obstacle = 0.0;
        for (&p, &c) in densities.iter().zip(&collided) {
            if c {
                obstacle += p;
                probs.push(0.0);
            } else {
                probs.push(p / total);
            }
        }
        probs.push(obstacle / total);
        let mut support: Vec<Successor> = states.into_iter().map(Successor::State).collect();
        support.push(Successor::Obstacle);
        let mut densities = densities;
        densities.push(0.0);
        let mut collided = collided;
        collided.push(false);
        Ok(Self { support, probs, densities, collided, fallback: false })
    }

    /// Point mass on one sampled state.
    pub fn deterministic(state: usize) -> Self {
        Self {
            support: vec![Successor::State(state), Successor::Obstacle],
            probs: vec![1.0, 0.0],
            densities: vec![1.0, 0.0],
            collided: vec![false, false],
            fallback: false,
        }
    }

    pub fn obstacle_prob(&self) -> f64 {
        *self.probs.last().expect("obstacle entry")
    }

    /// Entries with positive probability.
    pub fn outcomes(&self) -> impl Iterator<Item = (Successor, f64)> + '_ {
        self.support.iter().zip(&self.probs).filter(|(_, &p)| p > 0.0).map(|(&s, &p)| (s, p))
    }

    /// Inverse-CDF draw with `u ∈ [0, 1)`.
    pub fn sample_with(&self, u: f64) -> Successor {
        let mut acc = 0.0;
        let mut last = None;
        for (s, p) in self.outcomes() {
            acc += p;
            last = Some(s);
            if u < acc {
                return s;
            }
        }
        last.expect("transition has positive mass")
    }
}

/// Indices whose density exceeds `epsilon`, in index order.
pub fn high_prob_next_states(densities: &[f64], epsilon: f64) -> Vec<usize> {
    densities.iter().enumerate().filter(|(_, &p)| p > epsilon).map(|(i, _)| i).collect()
}

/// Counters for density work, shared across threads.
#[derive(Debug, Default)]
pub struct TransitionCounters {
    pub density_evaluations: AtomicUsize,
    pub computed: AtomicUsize,
    pub fallbacks: AtomicUsize,
}

/// Builds `P̂(· | s, a)` over the sampled states. Only states inside the
/// union of per-component radii can exceed `epsilon`; the rest are skipped
/// without evaluation.
pub fn transition_model(
    s_idx: usize,
    a: &ActionVec,
    set: &SampledStateSet,
    model: &dyn LocalModel,
    map: &WorldMap,
    epsilon: f64,
    counters: Option<&TransitionCounters>,
) -> Result<DiscreteTransition> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument("epsilon must be non-negative".into()));
    }
    let s = set.state(s_idx);
    let g = model.mixture(a)?;
    let k = g.n_components();
    let mut candidates = Vec::new();
    let mut scratch = Vec::new();
    if epsilon > 0.0 {
        for c in 0..k {
            if let Some(r) = g.component_radius(c, epsilon / k as f64) {
                let center: Vec<f64> = s.coords().iter().zip(&g.means()[c]).map(|(x, m)| x + m).collect();
                set.within(&center, r, &mut scratch);
                candidates.extend_from_slice(&scratch);
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
    } else {
        candidates.extend(0..set.len());
    }

    let mut states = Vec::new();
    let mut densities = Vec::new();
    let mut delta = vec![0.0; s.dim()];
    for &i in &candidates {
        for ((d, x), y) in delta.iter_mut().zip(set.state(i).coords()).zip(s.coords()) {
            *d = x - y;
        }
        let p = g.pdf(&delta);
        if !p.is_finite() {
            return Err(Error::NonFiniteDensity { state: s_idx, action: a.features() });
        }
        if p > epsilon {
            states.push(i);
            densities.push(p);
        }
    }
    if let Some(c) = counters {
        c.density_evaluations.fetch_add(candidates.len(), Ordering::Relaxed);
        c.computed.fetch_add(1, Ordering::Relaxed);
    }

    if states.is_empty() {
        let target = s.offset(&g.mean());
        let mut t = DiscreteTransition::deterministic(set.nearest(&target));
        t.fallback = true;
        if let Some(c) = counters {
            c.fallbacks.fetch_add(1, Ordering::Relaxed);
        }
        return Ok(t);
    }

    let collided: Vec<bool> =
        states.iter().map(|&i| set.is_boundary(i) || exists_collision(s, a, set.state(i), map)).collect();
    DiscreteTransition::from_densities(states, densities, collided)
}

#[derive(Clone, Debug)]
struct Entry {
    generation: u64,
    transition: Arc<DiscreteTransition>,
}

/// Concurrent memo of transitions keyed by `(state index, exact action)`.
/// Entries from an older state-set generation are recomputed on access.
#[derive(Debug, Default)]
pub struct TransitionCache {
    map: DashMap<(usize, Vec<u64>), Entry>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl TransitionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup_or_compute(
        &self,
        generation: u64,
        s_idx: usize,
        a: &ActionVec,
        compute: impl FnOnce() -> Result<DiscreteTransition>,
    ) -> Result<Arc<DiscreteTransition>> {
        let key = (s_idx, a.key());
        if let Some(e) = self.map.get(&key) {
            if e.generation == generation {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(e.transition.clone());
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let transition = Arc::new(compute()?);
        self.map.insert(key, Entry { generation, transition: transition.clone() });
        Ok(transition)
    }

    pub fn clear(&self) {
        self.map.clear();
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    /// All cached transitions (any generation).
    pub fn transitions(&self) -> Vec<(usize, Arc<DiscreteTransition>)> {
        self.map.iter().map(|e| (e.key().0, e.value().transition.clone())).collect()
    }
}
