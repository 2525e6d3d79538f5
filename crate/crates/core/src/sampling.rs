//! RRT-style growth of the sampled state set: interior states by forward
//! simulation of random actions, boundary states by bisecting toward points
//! inside obstacles.

use std::io::Write;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::density::DisplacementSampler;
use crate::domain::{exists_collision, state_distance, ActionSpace, ActionVec, StateVec, WorldMap};
use crate::error::{Error, Result};
use crate::kdtree::{KdTree, Metric};

/// Below this size nearest-neighbour queries scan linearly.
pub const LINEAR_SCAN_LIMIT: usize = 4096;
/// Boundary bisection stops once the bracketing segment is shorter than this.
pub const BISECTION_TOLERANCE: f64 = 1e-6;
/// Depth of the exterior target band, as a fraction of the map extent.
pub const EXTERIOR_BAND: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Uniform actions tried per extension.
    #[serde(default = "default_tries")]
    pub n_action_tries: usize,
    /// Extension attempts allowed per call before giving up on the goal.
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_tries() -> usize {
    10
}

fn default_attempts() -> usize {
    1_000_000
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { n_action_tries: default_tries(), max_attempts: default_attempts() }
    }
}

/// The finite state set the planner works on. Index 0 is the start state.
#[derive(Clone, Debug)]
pub struct SampledStateSet {
    states: Vec<StateVec>,
    boundary: Vec<bool>,
    goal: Vec<bool>,
    parent: Vec<Option<usize>>,
    generation: u64,
    index: Option<KdTree>,
    indexed: usize,
    /// Set when boundary sampling was requested on a map without obstacles.
    pub no_obstacle_warning: bool,
}

impl SampledStateSet {
    pub fn new(start: StateVec, map: &WorldMap) -> Result<Self> {
        if map.state_collides(&start) {
            return Err(Error::InvalidArgument("start state is in collision".into()));
        }
        let goal = map.in_goal(&start);
        Ok(Self {
            states: vec![start],
            boundary: vec![false],
            goal: vec![goal],
            parent: vec![None],
            generation: 0,
            index: None,
            indexed: 0,
            no_obstacle_warning: false,
        })
    }

    /// Builds a set from explicit states (flags taken from `map`).
    pub fn from_states(states: Vec<StateVec>, boundary: Vec<bool>, map: &WorldMap) -> Result<Self> {
        if states.is_empty() || boundary.len() != states.len() {
            return Err(Error::InvalidArgument("states and boundary flags must be non-empty and aligned".into()));
        }
        let goal = states.iter().map(|s| map.in_goal(s)).collect();
        let parent = vec![None; states.len()];
        let mut set =
            Self { states, boundary, goal, parent, generation: 0, index: None, indexed: 0, no_obstacle_warning: false };
        set.refresh_index();
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &StateVec {
        &self.states[i]
    }

    pub fn states(&self) -> &[StateVec] {
        &self.states
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn is_goal(&self, i: usize) -> bool {
        self.goal[i]
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn has_goal(&self) -> bool {
        self.goal.iter().any(|&g| g)
    }

    pub fn goal_count(&self) -> usize {
        self.goal.iter().filter(|&&g| g).count()
    }

    fn push(&mut self, s: StateVec, boundary: bool, parent: Option<usize>, map: &WorldMap) {
        self.goal.push(map.in_goal(&s));
        self.states.push(s);
        self.boundary.push(boundary);
        self.parent.push(parent);
        if self.len() - self.indexed > (self.indexed / 4).max(LINEAR_SCAN_LIMIT / 4) {
            self.refresh_index();
        }
    }

    /// Rebuilds the spatial index over all current states.
    pub fn refresh_index(&mut self) {
        if self.len() <= LINEAR_SCAN_LIMIT {
            self.index = None;
            self.indexed = 0;
            return;
        }
        let dim = self.states[0].dim();
        let coords = self.states.iter().flat_map(|s| s.coords().iter().copied()).collect();
        self.index = Some(KdTree::build(dim, coords, Metric::L2));
        self.indexed = self.len();
    }

    fn dist2(&self, i: usize, q: &[f64]) -> f64 {
        self.states[i].coords().iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Index of the closest state; ties resolve to the lowest index.
    pub fn nearest(&self, s: &StateVec) -> usize {
        self.nearest_where(s, |_| true).expect("non-empty set")
    }

    /// Closest state among those accepted by `keep`.
    pub fn nearest_where(&self, s: &StateVec, keep: impl Fn(usize) -> bool) -> Option<usize> {
        let q = s.coords();
        let mut best: Option<(f64, usize)> = None;
        let consider = |i: usize, best: &mut Option<(f64, usize)>| {
            if keep(i) {
                let d = self.dist2(i, q);
                if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                    *best = Some((d, i));
                }
            }
        };
        let tail_start = match &self.index {
            Some(tree) => {
                // grow k until an accepted point appears
                let mut k = 1;
                loop {
                    let found = tree.k_nearest(q, k);
                    if let Some(&(_, i)) = found.iter().find(|(_, i)| keep(*i)) {
                        consider(i, &mut best);
                        break;
                    }
                    if k >= tree.len() {
                        break;
                    }
                    k = (k * 4).min(tree.len());
                }
                self.indexed
            }
            None => 0,
        };
        for i in tail_start..self.len() {
            consider(i, &mut best);
        }
        best.map(|(_, i)| i)
    }

    /// Indices of states within Euclidean `radius` of `center`, ascending.
    pub fn within(&self, center: &[f64], radius: f64, out: &mut Vec<usize>) {
        out.clear();
        let r2 = radius * radius;
        let tail_start = match &self.index {
            Some(tree) => {
                tree.within_into(center, radius, out);
                self.indexed
            }
            None => 0,
        };
        for i in tail_start..self.len() {
            if self.dist2(i, center) <= r2 {
                out.push(i);
            }
        }
    }

    /// Writes `index,x_1..x_d,boundary,goal` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let dim = self.states[0].dim();
        let mut header = vec!["index".to_string()];
        header.extend((1..=dim).map(|i| format!("x_{i}")));
        header.extend(["boundary".to_string(), "goal".to_string()]);
        w.write_record(&header)?;
        for (i, s) in self.states.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(s.coords().iter().map(|v| format!("{v:?}")));
            row.push(self.boundary[i].to_string());
            row.push(self.goal[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One RRT extension from `s_nearest` toward `s_rand`: the collision-free
/// sampled successor closest to the target, if any.
pub fn rrt_extend(
    s_nearest: &StateVec,
    s_rand: &StateVec,
    sampler: &dyn DisplacementSampler,
    space: &ActionSpace,
    map: &WorldMap,
    rng: &mut dyn RngCore,
    n_action_tries: usize,
) -> Result<Option<(StateVec, ActionVec)>> {
    if n_action_tries == 0 {
        return Err(Error::InvalidArgument("n_action_tries must be at least 1".into()));
    }
    let mut best: Option<(f64, StateVec, ActionVec)> = None;
    for _ in 0..n_action_tries {
        let a = space.sample_uniform(rng);
        let delta = sampler.sample_displacement(&a, rng)?;
        let next = StateVec::new(s_nearest.offset(&delta).coords().to_vec())?;
        if exists_collision(s_nearest, &a, &next, map) {
            continue;
        }
        let d = state_distance(&next, s_rand)?;
        if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
            best = Some((d, next, a));
        }
    }
    Ok(best.map(|(_, s, a)| (s, a)))
}

/// Adds `n` interior states, then keeps extending until the set holds a goal state.
pub fn sample_interior_states<R: Rng>(
    n: usize,
    set: &mut SampledStateSet,
    map: &WorldMap,
    space: &ActionSpace,
    sampler: &dyn DisplacementSampler,
    rng: &mut R,
    cfg: &SamplingConfig,
) -> Result<usize> {
    let mut added = 0;
    let mut attempts = 0;
    while added < n || !set.has_goal() {
        if attempts >= cfg.max_attempts {
            return Err(Error::SamplingBudget { attempts });
        }
        attempts += 1;
        let target = map.sample_uniform(rng);
        let near = set.nearest_where(&target, |i| !set.is_boundary(i));
        let Some(near) = near else { continue };
        let from = set.state(near).clone();
        if let Some((s, _)) = rrt_extend(&from, &target, sampler, space, map, rng, cfg.n_action_tries)? {
            set.push(s, false, Some(near), map);
            added += 1;
        }
    }
    Ok(added)
}

/// Point in a band just outside the map bounds, side chosen by length.
fn sample_exterior<R: Rng>(map: &WorldMap, rng: &mut R) -> [f64; 2] {
    let (lo, hi) = (map.bounds.lo, map.bounds.hi);
    let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
    let depth = EXTERIOR_BAND * w.max(h) * rng.random::<f64>().max(f64::MIN_POSITIVE);
    let t = rng.random::<f64>() * 2.0 * (w + h);
    if t < w {
        [lo[0] + t, lo[1] - depth]
    } else if t < 2.0 * w {
        [lo[0] + t - w, hi[1] + depth]
    } else if t < 2.0 * w + h {
        [lo[0] - depth, lo[1] + t - 2.0 * w]
    } else {
        [hi[0] + depth, lo[1] + t - 2.0 * w - h]
    }
}

/// Adds up to `n` states on obstacle surfaces and on the map edge (the
/// exterior counts as one more obstacle). Returns the number added.
pub fn sample_boundary_states<R: Rng>(n: usize, set: &mut SampledStateSet, map: &WorldMap, rng: &mut R) -> usize {
    if n == 0 {
        return 0;
    }
    if map.obstacles.is_empty() {
        set.no_obstacle_warning = true;
        return 0;
    }
    let mut added = 0;
    let mut attempts = 0;
    while added < n && attempts < 100 * n {
        attempts += 1;
        let pick = rng.random_range(0..=map.obstacles.len());
        let p = match map.obstacles.get(pick) {
            Some(o) => o.sample_inside(rng),
            None => sample_exterior(map, rng),
        };
        let target = StateVec::xy(p[0], p[1]);
        let from = match set.nearest_where(&target, |i| !set.is_boundary(i) && !map.state_collides(set.state(i))) {
            Some(i) => set.state(i).clone(),
            None => continue,
        };
        let Some(t_hit) = map.first_collision(&from, &target) else { continue };
        if t_hit == 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (t_hit - 1.0 / crate::domain::COLLISION_RESOLUTION as f64, t_hit);
        let length = state_distance(&from, &target).unwrap_or(0.0);
        while (hi - lo) * length > BISECTION_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if map.state_collides(&from.lerp(&target, mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        set.push(from.lerp(&target, lo), true, None, map);
        added += 1;
    }
    added
}

/// Grows the set by `⌈n_min/2⌉` interior and `⌈n_min/2⌉` boundary states
/// (interior growth continues until a goal state is present).
pub fn sample_states<R: Rng>(
    n_min: usize,
    set: &mut SampledStateSet,
    map: &WorldMap,
    space: &ActionSpace,
    sampler: &dyn DisplacementSampler,
    rng: &mut R,
    cfg: &SamplingConfig,
) -> Result<()> {
    if n_min < 2 {
        return Err(Error::InvalidArgument("n_min must be at least 2".into()));
    }
    let half = n_min.div_ceil(2);
    sample_interior_states(half, set, map, space, sampler, rng, cfg)?;
    sample_boundary_states(half, set, map, rng);
    set.refresh_index();
    set.generation += 1;
    Ok(())
}
