//! State and action spaces, planar world maps, collision checking and rewards.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of a segment's length between consecutive collision samples.
pub const COLLISION_RESOLUTION: usize = 50;

/// A point in the state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVec {
    coords: Vec<f64>,
}

impl StateVec {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite state {coords:?}")));
        }
        Ok(Self { coords })
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Self { coords: vec![x, y] }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.coords[0]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.coords[1]
    }

    /// `self + delta`, componentwise.
    pub fn offset(&self, delta: &[f64]) -> StateVec {
        StateVec { coords: self.coords.iter().zip(delta).map(|(a, b)| a + b).collect() }
    }

    /// `self - other`, componentwise.
    pub fn diff(&self, other: &StateVec) -> Vec<f64> {
        self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect()
    }

    pub fn lerp(&self, other: &StateVec, t: f64) -> StateVec {
        StateVec {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + t * (b - a)).collect(),
        }
    }
}

/// Euclidean distance between two states.
pub fn state_distance(a: &StateVec, b: &StateVec) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(a.coords.iter().zip(&b.coords).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// A control vector together with its execution duration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionVec {
    pub control: Vec<f64>,
    pub duration: f64,
}

impl ActionVec {
    pub fn new(control: Vec<f64>, duration: f64) -> Self {
        Self { control, duration }
    }

    /// Control coordinates followed by the duration.
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.control.len() + 1);
        f.extend_from_slice(&self.control);
        f.push(self.duration);
        f
    }

    pub fn from_features(f: &[f64]) -> Self {
        let (control, duration) = f.split_at(f.len() - 1);
        Self { control: control.to_vec(), duration: duration[0] }
    }

    /// Bit pattern used for exact-equality keys.
    pub fn key(&self) -> Vec<u64> {
        self.control.iter().chain(std::iter::once(&self.duration)).map(|v| v.to_bits()).collect()
    }
}

/// Box-bounded controls plus a duration interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub control_lo: Vec<f64>,
    pub control_hi: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
}

impl ActionSpace {
    pub fn new(control_lo: Vec<f64>, control_hi: Vec<f64>, t_min: f64, t_max: f64) -> Result<Self> {
        if control_lo.len() != control_hi.len() {
            return Err(Error::DimensionMismatch { expected: control_lo.len(), got: control_hi.len() });
        }
        if control_lo.iter().zip(&control_hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("control bounds must satisfy lo <= hi".into()));
        }
        if !(t_min > 0.0 && t_min <= t_max) {
            return Err(Error::InvalidArgument(format!("need 0 < t_min <= t_max, got [{t_min}, {t_max}]")));
        }
        Ok(Self { control_lo, control_hi, t_min, t_max })
    }

    pub fn control_dim(&self) -> usize {
        self.control_lo.len()
    }

    /// Dimension of the feature vector (controls plus duration).
    pub fn feature_dim(&self) -> usize {
        self.control_dim() + 1
    }

    pub fn feature_lo(&self) -> Vec<f64> {
        let mut v = self.control_lo.clone();
        v.push(self.t_min);
        v
    }

    pub fn feature_hi(&self) -> Vec<f64> {
        let mut v = self.control_hi.clone();
        v.push(self.t_max);
        v
    }

    pub fn contains(&self, a: &ActionVec) -> bool {
        a.control.len() == self.control_dim()
            && a.control.iter().zip(self.control_lo.iter().zip(&self.control_hi)).all(|(c, (l, h))| c >= l && c <= h)
            && a.duration >= self.t_min
            && a.duration <= self.t_max
    }

    /// Maps a point of the unit cube `[0,1]^(d_u+1)` into the action box.
    pub fn from_unit(&self, u: &[f64]) -> ActionVec {
        let control = (0..self.control_dim())
            .map(|i| self.control_lo[i] + u[i] * (self.control_hi[i] - self.control_lo[i]))
            .collect();
        let duration = self.t_min + u[self.control_dim()] * (self.t_max - self.t_min);
        ActionVec { control, duration }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionVec {
        let u: Vec<f64> = (0..self.feature_dim()).map(|_| rng.random::<f64>()).collect();
        self.from_unit(&u)
    }

    /// Euclidean metric on `(u, Δt / T_max)`.
    pub fn action_metric(&self, a: &ActionVec, b: &ActionVec) -> f64 {
        let c: f64 = a.control.iter().zip(&b.control).map(|(x, y)| (x - y) * (x - y)).sum();
        let t = (a.duration - b.duration) / self.t_max;
        (c + t * t).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Aabb {
    fn distance(&self, p: [f64; 2]) -> f64 {
        let dx = (self.lo[0] - p[0]).max(0.0).max(p[0] - self.hi[0]);
        let dy = (self.lo[1] - p[1]).max(0.0).max(p[1] - self.hi[1]);
        (dx * dx + dy * dy).sqrt()
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.lo[0] && p[0] <= self.hi[0] && p[1] >= self.lo[1] && p[1] <= self.hi[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Obstacle {
    Rect { lo: [f64; 2], hi: [f64; 2] },
    Disc { center: [f64; 2], radius: f64 },
}

impl Obstacle {
    /// True if a disc of radius `inflation` centred at `p` overlaps the obstacle.
    pub fn hits(&self, p: [f64; 2], inflation: f64) -> bool {
        match self {
            Obstacle::Rect { lo, hi } => {
                let b = Aabb { lo: *lo, hi: *hi };
                if inflation > 0.0 {
                    b.distance(p) < inflation
                } else {
                    p[0] > lo[0] && p[0] < hi[0] && p[1] > lo[1] && p[1] < hi[1]
                }
            }
            Obstacle::Disc { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                (dx * dx + dy * dy).sqrt() < radius + inflation
            }
        }
    }

    pub fn sample_inside<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match self {
            Obstacle::Rect { lo, hi } => [
                lo[0] + rng.random::<f64>() * (hi[0] - lo[0]),
                lo[1] + rng.random::<f64>() * (hi[1] - lo[1]),
            ],
            Obstacle::Disc { center, radius } => {
                let r = radius * rng.random::<f64>().sqrt();
                let th = std::f64::consts::TAU * rng.random::<f64>();
                [center[0] + r * th.cos(), center[1] + r * th.sin()]
            }
        }
    }

    fn within(&self, b: &Aabb) -> bool {
        match self {
            Obstacle::Rect { lo, hi } => lo[0] <= hi[0] && lo[1] <= hi[1] && b.contains(*lo) && b.contains(*hi),
            Obstacle::Disc { center, radius } => {
                *radius > 0.0
                    && b.contains([center[0] - radius, center[1] - radius])
                    && b.contains([center[0] + radius, center[1] + radius])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalRegion {
    pub center: [f64; 2],
    pub radius: f64,
}

impl GoalRegion {
    pub fn contains(&self, s: &StateVec) -> bool {
        let dx = s.x() - self.center[0];
        let dy = s.y() - self.center[1];
        (dx * dx + dy * dy).sqrt() <= self.radius
    }
}

/// Planar workspace: bounds, obstacles, a goal disc and the radius of the
/// moved object (obstacles are inflated by it during collision checks).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldMap {
    pub bounds: Aabb,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub goal: GoalRegion,
    #[serde(default)]
    pub inflation: f64,
}

impl WorldMap {
    pub fn new(bounds: Aabb, obstacles: Vec<Obstacle>, goal: GoalRegion, inflation: f64) -> Result<Self> {
        let map = Self { bounds, obstacles, goal, inflation };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        if !(b.lo[0] < b.hi[0] && b.lo[1] < b.hi[1]) {
            return Err(Error::Config("bounds must satisfy lo < hi".into()));
        }
        if !(self.goal.radius > 0.0) {
            return Err(Error::Config("goal radius must be positive".into()));
        }
        if !(self.inflation >= 0.0) {
            return Err(Error::Config("inflation must be non-negative".into()));
        }
        if let Some(i) = self.obstacles.iter().position(|o| !o.within(b)) {
            return Err(Error::Config(format!("obstacle {i} is degenerate or outside the bounds")));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let map: WorldMap = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    /// True if the (inflated) object at `p` overlaps an obstacle or leaves the bounds.
    pub fn point_collides(&self, p: [f64; 2]) -> bool {
        let r = self.inflation;
        let b = &self.bounds;
        if p[0] < b.lo[0] + r || p[0] > b.hi[0] - r || p[1] < b.lo[1] + r || p[1] > b.hi[1] - r {
            return true;
        }
        self.obstacles.iter().any(|o| o.hits(p, r))
    }

    pub fn state_collides(&self, s: &StateVec) -> bool {
        self.point_collides([s.x(), s.y()])
    }

    pub fn in_goal(&self, s: &StateVec) -> bool {
        self.goal.contains(s)
    }

    pub fn clamp(&self, s: &StateVec) -> StateVec {
        let mut c = s.coords().to_vec();
        for (i, v) in c.iter_mut().take(2).enumerate() {
            *v = v.clamp(self.bounds.lo[i], self.bounds.hi[i]);
        }
        StateVec { coords: c }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVec {
        let b = &self.bounds;
        StateVec::xy(
            b.lo[0] + rng.random::<f64>() * (b.hi[0] - b.lo[0]),
            b.lo[1] + rng.random::<f64>() * (b.hi[1] - b.lo[1]),
        )
    }

    /// Parameter of the first collision sample along `from → to`, if any.
    pub fn first_collision(&self, from: &StateVec, to: &StateVec) -> Option<f64> {
        let n = COLLISION_RESOLUTION;
        (0..=n).map(|i| i as f64 / n as f64).find(|&t| {
            let p = [from.x() + t * (to.x() - from.x()), from.y() + t * (to.y() - from.y())];
            self.point_collides(p)
        })
    }
}

/// Checks the straight path `s → s_next` induced by `a` against the map.
pub fn exists_collision(s: &StateVec, _a: &ActionVec, s_next: &StateVec, map: &WorldMap) -> bool {
    map.first_collision(s, s_next).is_some()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub action_cost: f64,
    pub obstacle_cost: f64,
    pub goal_reward: f64,
    pub gamma: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self { action_cost: -1.0, obstacle_cost: -10.0, goal_reward: 100.0, gamma: 0.99 }
    }
}

impl RewardSpec {
    pub fn new(action_cost: f64, obstacle_cost: f64, goal_reward: f64, gamma: f64) -> Result<Self> {
        let spec = Self { action_cost, obstacle_cost, goal_reward, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.goal_reward > 0.0 && 0.0 > self.action_cost && self.action_cost > self.obstacle_cost) {
            return Err(Error::Config("rewards must satisfy goal > 0 > action > obstacle".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Discount applied over an action of the given duration.
    #[inline]
    pub fn discount(&self, duration: f64) -> f64 {
        self.gamma.powf(duration)
    }
}

/// Outcome of a transition: a state, or the collision pseudo-state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NextState<'a> {
    Obstacle,
    State(&'a StateVec),
}

/// Instantaneous reward of `s --a--> next`.
pub fn reward(_s: &StateVec, _a: &ActionVec, next: NextState<'_>, spec: &RewardSpec, map: &WorldMap) -> f64 {
    match next {
        NextState::Obstacle => spec.obstacle_cost,
        NextState::State(s) if map.in_goal(s) => spec.goal_reward,
        NextState::State(_) => spec.action_cost,
    }
}

/// A recorded displacement outcome of an action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub action: ActionVec,
    pub delta: Vec<f64>,
}

impl DatasetRecord {
    pub fn new(action: ActionVec, delta: Vec<f64>) -> Result<Self> {
        if action.features().iter().chain(&delta).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite dataset record".into()));
        }
        Ok(Self { action, delta })
    }
}
