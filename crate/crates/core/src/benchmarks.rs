//! Ground-truth simulators for the two benchmark domains, dataset
//! generation and Monte Carlo policy evaluation.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ActionSpace, ActionVec, DatasetRecord, RewardSpec, StateVec, WorldMap};
use crate::error::{Error, Result};
use crate::planner::{execute_policy, Outcome, Rollout};
use crate::sampling::SampledStateSet;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

fn rotate(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Rotation dynamics `s' = s + R(z)·ρ` with
/// `ρ ~ 0.6·N((5,5), 2I) + 0.4·N((5,−5), 2I)`; duration fixed at 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyDomain;

impl ToyDomain {
    pub const WEIGHTS: [f64; 2] = [0.6, 0.4];
    pub const MEANS: [[f64; 2]; 2] = [[5.0, 5.0], [5.0, -5.0]];
    pub const VARIANCE: f64 = 2.0;

    /// Noise draw with its mixture component.
    pub fn sample_noise(rng: &mut dyn RngCore) -> (usize, [f64; 2]) {
        let k = if rng.random::<f64>() < Self::WEIGHTS[0] { 0 } else { 1 };
        let sd = Self::VARIANCE.sqrt();
        let e: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        (k, [Self::MEANS[k][0] + sd * e[0], Self::MEANS[k][1] + sd * e[1]])
    }
}

/// Quasi-static pushing of a disc with slip. The nominal displacement is
/// `v·Δt·(cos z, sin z)` with `v = v0·(1 − 0.5|x|)`. With probability
/// `0.15 + 0.25|x|` the contact slips: the displacement is rotated by
/// `±slip_angle` and scaled by `slip_scale`. Gaussian jitter with standard
/// deviation `jitter · ‖nominal‖` is added.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PushDomain {
    pub object_radius: f64,
    pub v0: f64,
    pub slip_base: f64,
    pub slip_gain: f64,
    pub slip_angle: f64,
    pub slip_scale: f64,
    pub jitter: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for PushDomain {
    fn default() -> Self {
        Self {
            object_radius: 1.0,
            v0: 4.0,
            slip_base: 0.15,
            slip_gain: 0.25,
            slip_angle: PI / 6.0,
            slip_scale: 0.5,
            jitter: 0.05,
            t_min: 0.1,
            t_max: 3.0,
        }
    }
}

impl PushDomain {
    pub fn slip_probability(&self, x: f64) -> f64 {
        self.slip_base + self.slip_gain * x.abs()
    }

    pub fn nominal(&self, a: &ActionVec) -> [f64; 2] {
        let v = self.v0 * (1.0 - 0.5 * a.control[1].abs());
        let (s, c) = a.control[0].sin_cos();
        [v * a.duration * c, v * a.duration * s]
    }

    /// Displacement with the slip branch chosen by the caller
    /// (`None` = no slip, `Some(sign)` = slip rotated by `sign·slip_angle`).
    pub fn displacement_with(&self, a: &ActionVec, slip: Option<f64>, rng: &mut dyn RngCore) -> [f64; 2] {
        let nominal = self.nominal(a);
        let norm = nominal[0].hypot(nominal[1]);
        let d = match slip {
            None => nominal,
            Some(sign) => {
                let r = rotate(nominal, sign * self.slip_angle);
                [self.slip_scale * r[0], self.slip_scale * r[1]]
            }
        };
        let sd = self.jitter * norm;
        let e: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        [d[0] + sd * e[0], d[1] + sd * e[1]]
    }
}

/// A benchmark domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Domain {
    Toy(ToyDomain),
    Push(PushDomain),
}

impl Domain {
    pub fn space(&self) -> ActionSpace {
        match self {
            Domain::Toy(_) => ActionSpace::new(vec![0.0], vec![TAU], 1.0, 1.0),
            Domain::Push(p) => ActionSpace::new(vec![0.0, -1.0], vec![TAU, 1.0], p.t_min, p.t_max),
        }
        .expect("benchmark action spaces are valid")
    }

    pub fn name(&self) -> &'static str {
        match self {
            Domain::Toy(_) => "toy",
            Domain::Push(_) => "push",
        }
    }

    pub fn displacement(&self, a: &ActionVec, rng: &mut dyn RngCore) -> [f64; 2] {
        match self {
            Domain::Toy(_) => rotate(ToyDomain::sample_noise(rng).1, a.control[0]),
            Domain::Push(p) => {
                let slip = if rng.random::<f64>() < p.slip_probability(a.control[1]) {
                    Some(if rng.random::<bool>() { 1.0 } else { -1.0 })
                } else {
                    None
                };
                p.displacement_with(a, slip, rng)
            }
        }
    }

    pub fn step(&self, s: &StateVec, a: &ActionVec, rng: &mut dyn RngCore) -> StateVec {
        s.offset(&self.displacement(a, rng))
    }
}

/// `s + R(z)·ρ`.
pub fn toy_step(s: &StateVec, a: &ActionVec, rng: &mut dyn RngCore) -> StateVec {
    Domain::Toy(ToyDomain).step(s, a, rng)
}

pub fn push_step(domain: &PushDomain, s: &StateVec, a: &ActionVec, rng: &mut dyn RngCore) -> StateVec {
    Domain::Push(*domain).step(s, a, rng)
}

/// `n` uniform actions with one simulated displacement each, plus
/// `rotation_copies` copies of each record rotated by uniform angles
/// (valid because both domains are rotation-covariant in `z`).
pub fn generate_dataset<R: Rng>(domain: &Domain, n: usize, rotation_copies: usize, rng: &mut R) -> Result<Vec<DatasetRecord>> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    let space = domain.space();
    let mut out = Vec::with_capacity(n * (1 + rotation_copies));
    for _ in 0..n {
        let a = space.sample_uniform(rng);
        let d = domain.displacement(&a, rng);
        for _ in 0..rotation_copies {
            let phi = rng.random_range(0.0..TAU);
            let mut b = a.clone();
            b.control[0] = (b.control[0] + phi).rem_euclid(TAU);
            out.push(DatasetRecord::new(b, rotate(d, phi).to_vec())?);
        }
        out.push(DatasetRecord::new(a, d.to_vec())?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub schema_version: u32,
    pub n_rollouts: usize,
    pub max_steps: usize,
    pub mean_discounted_reward: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    pub mean_steps: f64,
    pub fallback_steps: usize,
}

impl EvaluationSummary {
    pub fn from_rollouts(rollouts: &[Rollout], max_steps: usize) -> Self {
        let n = rollouts.len().max(1) as f64;
        let rate = |o: Outcome| rollouts.iter().filter(|r| r.outcome == o).count() as f64 / n;
        Self {
            schema_version: SUMMARY_SCHEMA_VERSION,
            n_rollouts: rollouts.len(),
            max_steps,
            mean_discounted_reward: rollouts.iter().map(|r| r.discounted_reward).sum::<f64>() / n,
            success_rate: rate(Outcome::Success),
            collision_rate: rate(Outcome::Collision),
            timeout_rate: rate(Outcome::Timeout),
            mean_steps: rollouts.iter().map(|r| r.steps.len()).sum::<usize>() as f64 / n,
            fallback_steps: rollouts.iter().flat_map(|r| &r.steps).filter(|s| s.fallback).count(),
        }
    }
}

/// Runs `n_rollouts` independent rollouts; rollout `i` uses the seed
/// `base_seed + i`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    policy: &[Option<ActionVec>],
    set: &SampledStateSet,
    domain: &Domain,
    map: &WorldMap,
    spec: &RewardSpec,
    fallback: &(dyn Fn(usize, &mut dyn RngCore) -> Result<ActionVec> + Sync),
    start: &StateVec,
    n_rollouts: usize,
    max_steps: usize,
    base_seed: u64,
) -> Result<(EvaluationSummary, Vec<Rollout>)> {
    let simulate = |s: &StateVec, a: &ActionVec, rng: &mut dyn RngCore| domain.step(s, a, rng);
    let rollouts = (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(i as u64));
            execute_policy(policy, set, map, spec, &simulate, fallback, start, &mut rng, max_steps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((EvaluationSummary::from_rollouts(&rollouts, max_steps), rollouts))
}

/// One row per step, plus a final row per rollout holding the end state.
pub fn write_trajectories_csv<W: Write>(writer: W, rollouts: &[Rollout], control_dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["rollout".to_string(), "step".into(), "x_1".into(), "x_2".into()];
    header.extend((1..=control_dim).map(|i| format!("u_{i}")));
    header.extend(["duration".into(), "reward".into(), "outcome".into()]);
    w.write_record(&header)?;
    for (r, rollout) in rollouts.iter().enumerate() {
        for (k, step) in rollout.steps.iter().enumerate() {
            let mut row = vec![r.to_string(), k.to_string()];
            row.extend(step.state.iter().map(|v| format!("{v:?}")));
            row.extend(step.action.control.iter().map(|v| format!("{v:?}")));
            row.extend([format!("{:?}", step.action.duration), format!("{:?}", step.reward), String::new()]);
            w.write_record(&row)?;
        }
        let mut row = vec![r.to_string(), rollout.steps.len().to_string()];
        row.extend(rollout.final_state.iter().map(|v| format!("{v:?}")));
        row.extend((0..control_dim + 2).map(|_| String::new()));
        row.push(rollout.outcome.as_str().into());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Aabb, GoalRegion, Obstacle};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn toy_rotation_of_mean() {
        let mut r = rng(1);
        let n = 100_000;
        let a = ActionVec::new(vec![PI / 2.0], 1.0);
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let d = Domain::Toy(ToyDomain).displacement(&a, &mut r);
            for k in 0..2 {
                sum[k] += d[k];
                sq[k] += d[k] * d[k];
            }
        }
        let want = rotate([5.0, 1.0], PI / 2.0);
        for k in 0..2 {
            let m = sum[k] / n as f64;
            let se = ((sq[k] / n as f64 - m * m) / n as f64).sqrt();
            assert!((m - want[k]).abs() < 3.0 * se, "{k}: {m} vs {}", want[k]);
        }
    }

    #[test]
    fn toy_mode_fractions() {
        let mut r = rng(2);
        let a = ActionVec::new(vec![0.0], 1.0);
        let n = 100_000;
        let upper = (0..n).filter(|_| Domain::Toy(ToyDomain).displacement(&a, &mut r)[1] > 0.0).count();
        assert!((upper as f64 / n as f64 - 0.6).abs() < 0.01);
    }

    #[test]
    fn toy_identity_rotation() {
        let d = rotate(ToyDomain::MEANS[0], 0.0);
        assert_eq!(StateVec::xy(1.0, 2.0).offset(&d), StateVec::xy(6.0, 7.0));
    }

    #[test]
    fn push_nominal_is_exact() {
        let p = PushDomain { jitter: 0.0, ..Default::default() };
        let a = ActionVec::new(vec![0.7, 0.0], 2.0);
        let d = p.displacement_with(&a, None, &mut rng(0));
        assert_eq!(d, [4.0 * 2.0 * 0.7f64.cos(), 4.0 * 2.0 * 0.7f64.sin()]);
    }

    #[test]
    fn push_slip_fraction() {
        let p = PushDomain::default();
        let a = ActionVec::new(vec![0.0, 0.8], 1.0);
        let mut r = rng(3);
        let n = 100_000;
        let nominal = p.nominal(&a);
        let slipped = (0..n)
            .filter(|_| {
                let d = Domain::Push(p).displacement(&a, &mut r);
                d[0].hypot(d[1]) < 0.75 * nominal[0].hypot(nominal[1])
            })
            .count();
        assert!((slipped as f64 / n as f64 - 0.35).abs() < 0.01);
    }

    #[test]
    fn datasets_are_reproducible_and_in_bounds() {
        let d = Domain::Push(PushDomain::default());
        let a = generate_dataset(&d, 500, 0, &mut rng(4)).unwrap();
        assert_eq!(a, generate_dataset(&d, 500, 0, &mut rng(4)).unwrap());
        assert!(a.iter().all(|r| d.space().contains(&r.action)));
        assert!(generate_dataset(&d, 0, 0, &mut rng(4)).is_err());
        assert_eq!(generate_dataset(&d, 10, 2, &mut rng(4)).unwrap().len(), 30);
    }

    #[test]
    fn action_marginals_are_uniform() {
        let d = Domain::Push(PushDomain::default());
        let data = generate_dataset(&d, 100_000, 0, &mut rng(5)).unwrap();
        let space = d.space();
        let (lo, hi) = (space.feature_lo(), space.feature_hi());
        for k in 0..3 {
            let mut u: Vec<f64> = data.iter().map(|r| (r.action.features()[k] - lo[k]) / (hi[k] - lo[k])).collect();
            u.sort_by(f64::total_cmp);
            let n = u.len() as f64;
            let ks = u
                .iter()
                .enumerate()
                .map(|(i, &x)| f64::max((i + 1) as f64 / n - x, x - i as f64 / n))
                .fold(0.0, f64::max);
            assert!(ks < 0.01, "dim {k}: {ks}");
        }
    }

    fn corridor() -> WorldMap {
        WorldMap::new(
            Aabb { lo: [0.0, 0.0], hi: [40.0, 20.0] },
            vec![Obstacle::Rect { lo: [0.0, 14.0], hi: [40.0, 20.0] }],
            GoalRegion { center: [30.0, 5.0], radius: 3.0 },
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn evaluation_summary_matches_rollouts() {
        let map = corridor();
        let set = SampledStateSet::from_states(vec![StateVec::xy(5.0, 5.0), StateVec::xy(30.0, 5.0)], vec![false; 2], &map)
            .unwrap();
        let d = Domain::Toy(ToyDomain);
        let policy = vec![Some(ActionVec::new(vec![0.0], 1.0)), None];
        let fb = |_: usize, r: &mut dyn RngCore| Ok(d.space().sample_uniform(r));
        let spec = RewardSpec::default();
        let start = StateVec::xy(5.0, 5.0);
        let (sum, rollouts) = evaluate_policy(&policy, &set, &d, &map, &spec, &fb, &start, 200, 50, 9).unwrap();
        assert_eq!(rollouts.len(), 200);
        assert!(sum.collision_rate > 0.0);
        assert!((sum.success_rate + sum.collision_rate + sum.timeout_rate - 1.0).abs() < 1e-12);
        let again = evaluate_policy(&policy, &set, &d, &map, &spec, &fb, &start, 200, 50, 9).unwrap();
        assert_eq!(sum, again.0);

        let mut recomputed = 0.0;
        for r in &rollouts {
            let mut disc = 1.0;
            for s in &r.steps {
                recomputed += disc * s.reward;
                disc *= spec.discount(s.action.duration);
            }
        }
        assert!((recomputed / 200.0 - sum.mean_discounted_reward).abs() < 1e-9);

        let mut buf = Vec::new();
        write_trajectories_csv(&mut buf, &rollouts, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let total_steps: usize = rollouts.iter().map(|r| r.steps.len() + 1).sum();
        assert_eq!(text.lines().count(), total_steps + 1);
    }

    #[test]
    fn goal_start_scores_nothing() {
        let map = corridor();
        let set = SampledStateSet::from_states(vec![StateVec::xy(30.0, 5.0)], vec![false], &map).unwrap();
        let d = Domain::Toy(ToyDomain);
        let fb = |_: usize, r: &mut dyn RngCore| Ok(d.space().sample_uniform(r));
        let (sum, _) = evaluate_policy(
            &[None],
            &set,
            &d,
            &map,
            &RewardSpec::default(),
            &fb,
            &StateVec::xy(30.0, 5.0),
            5,
            10,
            0,
        )
        .unwrap();
        assert_eq!((sum.success_rate, sum.mean_discounted_reward, sum.mean_steps), (1.0, 0.0, 0.0));
    }

    #[test]
    fn one_step_to_goal_earns_goal_reward() {
        let map = WorldMap::new(
            Aabb { lo: [0.0, 0.0], hi: [40.0, 40.0] },
            vec![],
            GoalRegion { center: [23.0, 18.0], radius: 9.0 },
            0.0,
        )
        .unwrap();
        let start = StateVec::xy(13.0, 18.0);
        let set = SampledStateSet::from_states(vec![start.clone()], vec![false], &map).unwrap();
        let d = Domain::Toy(ToyDomain);
        let policy = vec![Some(ActionVec::new(vec![0.0], 1.0))];
        let fb = |_: usize, _: &mut dyn RngCore| unreachable!();
        let (_, rollouts) =
            evaluate_policy(&policy, &set, &d, &map, &RewardSpec::default(), &fb, &start, 50, 1, 0).unwrap();
        let one_step: Vec<&Rollout> = rollouts.iter().filter(|r| r.outcome == Outcome::Success).collect();
        assert!(one_step.len() > 25);
        assert!(one_step.iter().all(|r| r.steps.len() == 1 && r.discounted_reward == 100.0));
    }
}
