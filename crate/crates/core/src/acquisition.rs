//! Action selection for the Bellman maximization over a finite candidate
//! pool: GP-guided sequential and batch selection, and uniform random
//! selection as a baseline.
//!
//! Candidates are feature vectors; objectives are called with candidate
//! indices. The acquisition `G(a) = (h_u − μ(a)) / σ(a)` is minimized.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ActionSpace, ActionVec};
use crate::error::{Error, Result};
use crate::gp::{GpPosterior, KernelSpec, OutputTransform};
use crate::linalg::PackedCholesky;
use crate::scalar::Real;

/// Lower bound on σ inside the acquisition.
pub const SIGMA_FLOOR: f64 = 1e-9;
/// Diagonal jitter of the batch kernel matrix.
pub const BATCH_JITTER: f64 = 1e-9;
/// Schur complements below this fraction of `κ(a,a)` mark a duplicate.
pub const DUPLICATE_THRESHOLD: f64 = 1e-8;
/// Hyperparameters are refitted after this many sequential selections.
pub const REFIT_EVERY: usize = 5;

/// `(h_u − μ(x)) / max(σ(x), 1e-9)`; lower is better.
pub fn est_acquisition<T: Real>(posterior: &GpPosterior<T>, h_u: T, x: &[T]) -> T {
    let (mu, sigma) = posterior.predict(x);
    let floor = T::lit(SIGMA_FLOOR);
    (h_u - mu) / if sigma > floor { sigma } else { floor }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry<T> {
    pub candidate: usize,
    pub value: T,
    /// Acquisition value when chosen (NaN for random selection).
    pub acquisition: T,
    pub round: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection<T> {
    pub best_index: usize,
    pub best_value: T,
    pub history: Vec<HistoryEntry<T>>,
    /// Times `h_u` had to be lifted to the largest observed value.
    pub h_u_lifts: usize,
}

impl<T: Real> Selection<T> {
    fn from_history(history: Vec<HistoryEntry<T>>, h_u_lifts: usize) -> Result<Self> {
        let mut best: Option<(usize, T)> = None;
        for h in &history {
            if best.is_none_or(|(_, v)| h.value > v) {
                best = Some((h.candidate, h.value));
            }
        }
        let (best_index, best_value) = best.ok_or_else(|| Error::InvalidArgument("nothing was evaluated".into()))?;
        Ok(Self { best_index, best_value, history, h_u_lifts })
    }

    pub fn evaluated(&self) -> impl Iterator<Item = usize> + '_ {
        self.history.iter().map(|h| h.candidate)
    }
}

/// GP settings shared by the guided selectors.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidedParams<T> {
    pub kernel: KernelSpec<T>,
    /// Upper bound on the objective at this state.
    pub h_u: T,
    /// Weight of the acquisition term in the batch objective.
    pub lambda: T,
    /// Seed for hyperparameter refits.
    pub seed: u64,
}

/// Kernel with lengthscales at 20% of each feature range, unit signal
/// variance (targets are normalized) and noise `1e-4`.
pub fn default_kernel<T: Real>(lo: &[f64], hi: &[f64]) -> KernelSpec<T> {
    let lengthscales = lo
        .iter()
        .zip(hi)
        .map(|(l, h)| {
            let w = h - l;
            T::lit(if w > 0.0 { 0.2 * w } else { 1.0 })
        })
        .collect();
    KernelSpec { signal_variance: T::one(), lengthscales, noise_variance: T::lit(1e-4) }
}

fn check_value<T: Real>(candidates: &[Vec<T>], i: usize, y: T) -> Result<T> {
    if y.is_finite_real() {
        Ok(y)
    } else {
        Err(Error::NonFiniteObjective { action: candidates[i].iter().map(|v| v.as_f64()).collect(), value: y.as_f64() })
    }
}

struct Guide<T: Real> {
    posterior: GpPosterior<T>,
    h_u: T,
    lifts: usize,
    seed: u64,
    refits: u64,
}

impl<T: Real> Guide<T> {
    fn new(p: &GuidedParams<T>) -> Result<Self> {
        Ok(Self { posterior: GpPosterior::new(p.kernel.clone())?, h_u: p.h_u, lifts: 0, seed: p.seed, refits: 0 })
    }

    fn observe(&mut self, x: &[T], y: T) -> Result<()> {
        self.posterior.observe(x.to_vec(), y)?;
        if y > self.h_u + T::lit(1e-6) {
            self.h_u = y;
            self.lifts += 1;
        }
        Ok(())
    }

    fn normalize(&mut self) {
        let t = OutputTransform::robust(self.posterior.targets());
        self.posterior.set_transform(t);
    }

    fn refit(&mut self) {
        self.posterior = self.posterior.refit_hyperparameters(self.seed.wrapping_add(self.refits));
        self.refits += 1;
    }

    fn acquisition(&self, x: &[T]) -> T {
        est_acquisition(&self.posterior, self.h_u, x)
    }
}

/// Sequential GP optimization: `t` times, evaluate the remaining candidate
/// with the smallest acquisition.
pub fn select_sequential<T: Real>(
    params: &GuidedParams<T>,
    candidates: &[Vec<T>],
    mut evaluate: impl FnMut(usize) -> Result<T>,
    t: usize,
) -> Result<Selection<T>> {
    if t == 0 || candidates.is_empty() {
        return Err(Error::InvalidArgument("need at least one round and one candidate".into()));
    }
    let mut guide = Guide::new(params)?;
    let mut used = vec![false; candidates.len()];
    let mut history = Vec::with_capacity(t);
    for round in 0..t.min(candidates.len()) {
        let mut best: Option<(T, usize)> = None;
        for (i, x) in candidates.iter().enumerate() {
            if used[i] {
                continue;
            }
            let g = guide.acquisition(x);
            if best.is_none_or(|(b, _)| g < b) {
                best = Some((g, i));
            }
        }
        let (g, i) = best.expect("unused candidate remains");
        used[i] = true;
        let y = check_value(candidates, i, evaluate(i)?)?;
        guide.observe(&candidates[i], y)?;
        guide.normalize();
        if (round + 1) % REFIT_EVERY == 0 {
            guide.refit();
        }
        history.push(HistoryEntry { candidate: i, value: y, acquisition: g, round });
    }
    Selection::from_history(history, guide.lifts)
}

/// `log det K_{B∪{a}} − log det K_B − λ G(a)` through the Schur complement
/// of `a` against the factored batch matrix (prior kernel, jittered
/// diagonal). Returns `−∞` when `a` duplicates the batch.
pub fn batch_objective_increment<T: Real>(
    kernel: &KernelSpec<T>,
    batch_factor: &PackedCholesky<T>,
    batch: &[&[T]],
    a: &[T],
    lambda: T,
    acquisition: T,
) -> T {
    let kaa = kernel.eval(a, a);
    let cross: Vec<T> = batch.iter().map(|b| kernel.eval(b, a)).collect();
    let (s, _) = batch_factor.schur(&cross, kaa + T::lit(BATCH_JITTER));
    if !(s > T::lit(DUPLICATE_THRESHOLD) * kaa) {
        return T::lit(f64::NEG_INFINITY);
    }
    s.ln() - lambda * acquisition
}

/// Greedily picks up to `m` candidates (skipping `used`) maximizing the
/// batch objective under the given acquisition values. Ties go to the lowest
/// index. Once every remaining candidate duplicates the batch, the rest is
/// filled by smallest acquisition.
pub fn greedy_batch<T: Real>(
    kernel: &KernelSpec<T>,
    candidates: &[Vec<T>],
    acquisition: &[T],
    used: &[bool],
    lambda: T,
    m: usize,
) -> Vec<usize> {
    let mut factor = PackedCholesky::new();
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    let mut in_batch = used.to_vec();
    for _ in 0..m {
        let batch: Vec<&[T]> = chosen.iter().map(|&i| candidates[i].as_slice()).collect();
        let mut best: Option<(T, usize)> = None;
        for (i, x) in candidates.iter().enumerate() {
            if in_batch[i] {
                continue;
            }
            let inc = batch_objective_increment(kernel, &factor, &batch, x, lambda, acquisition[i]);
            if inc.is_finite_real() && best.is_none_or(|(b, _)| inc > b) {
                best = Some((inc, i));
            }
        }
        let Some((_, i)) = best else { break };
        let cross: Vec<T> = batch.iter().map(|b| kernel.eval(b, &candidates[i])).collect();
        let diag = kernel.eval(&candidates[i], &candidates[i]) + T::lit(BATCH_JITTER);
        if factor.push(&cross, diag).is_err() {
            break;
        }
        in_batch[i] = true;
        chosen.push(i);
    }
    let mut rest: Vec<usize> = (0..candidates.len()).filter(|&i| !in_batch[i]).collect();
    rest.sort_by(|&a, &b| acquisition[a].partial_cmp(&acquisition[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    chosen.extend(rest.into_iter().take(m - chosen.len()));
    chosen
}

/// `log det(K_B + jitter·I) − λ Σ_{a∈B} G(a)`.
pub fn batch_objective<T: Real>(kernel: &KernelSpec<T>, points: &[&[T]], acquisition: &[T], lambda: T) -> Result<T> {
    let factor = PackedCholesky::factor(points.len(), |i, j| {
        kernel.eval(points[i], points[j]) + if i == j { T::lit(BATCH_JITTER) } else { T::zero() }
    })?;
    let g = acquisition.iter().fold(T::zero(), |s, &v| s + v);
    Ok(factor.log_det() - lambda * g)
}

/// Batch GP optimization: `t` rounds of `m` greedily chosen candidates,
/// evaluated together.
pub fn select_batch<T: Real>(
    params: &GuidedParams<T>,
    candidates: &[Vec<T>],
    mut evaluate_batch: impl FnMut(&[usize]) -> Result<Vec<T>>,
    t: usize,
    m: usize,
) -> Result<Selection<T>> {
    if t == 0 || m == 0 || m > candidates.len() {
        return Err(Error::InvalidArgument(format!(
            "batch selection needs t >= 1 and 1 <= m <= {} (got t={t}, m={m})",
            candidates.len()
        )));
    }
    let mut guide = Guide::new(params)?;
    let mut used = vec![false; candidates.len()];
    let mut history = Vec::with_capacity(t * m);
    for round in 0..t {
        let acq: Vec<T> = candidates.iter().map(|x| guide.acquisition(x)).collect();
        let chosen = greedy_batch(&guide.posterior.kernel().clone(), candidates, &acq, &used, params.lambda, m);
        if chosen.is_empty() {
            break;
        }
        let values = evaluate_batch(&chosen)?;
        if values.len() != chosen.len() {
            return Err(Error::DimensionMismatch { expected: chosen.len(), got: values.len() });
        }
        for (&i, &y) in chosen.iter().zip(&values) {
            let y = check_value(candidates, i, y)?;
            used[i] = true;
            guide.observe(&candidates[i], y)?;
            history.push(HistoryEntry { candidate: i, value: y, acquisition: acq[i], round });
        }
        guide.normalize();
        guide.refit();
    }
    Selection::from_history(history, guide.lifts)
}

/// Evaluates `t` distinct uniformly chosen candidates.
pub fn select_random<T: Real, R: Rng + ?Sized>(
    candidates: usize,
    evaluate_batch: impl FnOnce(&[usize]) -> Result<Vec<T>>,
    t: usize,
    rng: &mut R,
) -> Result<Selection<T>> {
    if t == 0 || candidates == 0 {
        return Err(Error::InvalidArgument("need at least one evaluation and one candidate".into()));
    }
    let chosen = index::sample(rng, candidates, t.min(candidates)).into_vec();
    evaluate_all(&chosen, evaluate_batch)
}

/// Evaluates every candidate.
pub fn select_exhaustive<T: Real>(
    candidates: usize,
    evaluate_batch: impl FnOnce(&[usize]) -> Result<Vec<T>>,
) -> Result<Selection<T>> {
    let chosen: Vec<usize> = (0..candidates).collect();
    evaluate_all(&chosen, evaluate_batch)
}

fn evaluate_all<T: Real>(chosen: &[usize], evaluate_batch: impl FnOnce(&[usize]) -> Result<Vec<T>>) -> Result<Selection<T>> {
    let values = evaluate_batch(chosen)?;
    if values.len() != chosen.len() {
        return Err(Error::DimensionMismatch { expected: chosen.len(), got: values.len() });
    }
    let mut history = Vec::with_capacity(chosen.len());
    for (&i, &y) in chosen.iter().zip(&values) {
        if !y.is_finite_real() {
            return Err(Error::NonFiniteObjective { action: vec![i as f64], value: y.as_f64() });
        }
        history.push(HistoryEntry { candidate: i, value: y, acquisition: T::lit(f64::NAN), round: 0 });
    }
    Selection::from_history(history, 0)
}

/// How the per-state candidate pool is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CandidatePool {
    /// Shifted Halton points; the shift is seeded by the state index.
    Halton { size: usize },
    /// Regular grid with `per_dim` cell centres per non-degenerate feature.
    Grid { per_dim: usize },
}

impl Default for CandidatePool {
    fn default() -> Self {
        CandidatePool::Halton { size: 512 }
    }
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `i` in `base`.
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

impl CandidatePool {
    pub fn size(&self, space: &ActionSpace) -> usize {
        match self {
            CandidatePool::Halton { size } => *size,
            CandidatePool::Grid { per_dim } => {
                let lo = space.feature_lo();
                let hi = space.feature_hi();
                lo.iter().zip(&hi).map(|(l, h)| if h > l { *per_dim } else { 1 }).product()
            }
        }
    }

    pub fn build(&self, space: &ActionSpace, seed: u64) -> Result<Vec<ActionVec>> {
        let d = space.feature_dim();
        match self {
            CandidatePool::Halton { size } => {
                if *size == 0 || d > PRIMES.len() {
                    return Err(Error::Config("Halton pool needs size >= 1 and at most 12 features".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let shift: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                Ok((1..=*size as u64)
                    .map(|i| {
                        let u: Vec<f64> = (0..d).map(|k| (radical_inverse(i, PRIMES[k]) + shift[k]).fract()).collect();
                        space.from_unit(&u)
                    })
                    .collect())
            }
            CandidatePool::Grid { per_dim } => {
                if *per_dim == 0 {
                    return Err(Error::Config("grid pool needs per_dim >= 1".into()));
                }
                let lo = space.feature_lo();
                let hi = space.feature_hi();
                let counts: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| if h > l { *per_dim } else { 1 }).collect();
                let total: usize = counts.iter().product();
                Ok((0..total)
                    .map(|mut flat| {
                        let u: Vec<f64> = counts
                            .iter()
                            .map(|&c| {
                                let k = flat % c;
                                flat /= c;
                                (k as f64 + 0.5) / c as f64
                            })
                            .collect();
                        space.from_unit(&u)
                    })
                    .collect())
            }
        }
    }
}
