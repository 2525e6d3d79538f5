//! Local ("lazy access") transition densities.
//!
//! A query action selects the dataset records with the closest actions
//! (1-norm), and a full-covariance Gaussian mixture is fitted to their
//! displacements with EM, choosing the component count by BIC.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Arc;

use dashmap::DashMap;
use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{ActionSpace, ActionVec, DatasetRecord};
use crate::error::{Error, Result};
use crate::kdtree::{KdTree, Metric};
use crate::linalg::PackedCholesky;
use crate::scalar::Real;

/// Ridge added to every fitted covariance.
pub const COVARIANCE_RIDGE: f64 = 1e-6;
/// EM stops once the mean per-point log-likelihood improves by less than this.
pub const EM_TOLERANCE: f64 = 1e-5;
pub const EM_MAX_ITERATIONS: usize = 500;

/// Weighted sum of multivariate normals with full covariances.
#[derive(Clone, Debug)]
pub struct GaussianMixture<T: Real> {
    weights: Vec<T>,
    means: Vec<Vec<T>>,
    covariances: Vec<DMatrix<T>>,
    chol: Vec<PackedCholesky<T>>,
    // packed lower-triangular inverse of each Cholesky factor
    whiten: Vec<Vec<T>>,
    log_norm: Vec<T>,
    max_eig: Vec<T>,
}

impl<T: Real> GaussianMixture<T> {
    pub fn new(weights: Vec<T>, means: Vec<Vec<T>>, covariances: Vec<DMatrix<T>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::InvalidArgument("mixture needs matching, non-empty component lists".into()));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument("zero-dimensional mixture".into()));
        }
        for (m, c) in means.iter().zip(&covariances) {
            if m.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: m.len() });
            }
            if c.nrows() != d || c.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: c.nrows() });
            }
        }
        let total = weights.iter().fold(T::zero(), |a, &w| a + w);
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite_real())
            || (total - T::one()).abs() > T::lit(1e-9)
        {
            return Err(Error::InvalidArgument("mixture weights must be non-negative and sum to 1".into()));
        }
        let weights: Vec<T> = weights.into_iter().map(|w| w / total).collect();

        let half_d_ln_2pi = T::lit(0.5 * d as f64 * std::f64::consts::TAU.ln());
        let mut chol = Vec::with_capacity(k);
        let mut whiten = Vec::with_capacity(k);
        let mut log_norm = Vec::with_capacity(k);
        let mut max_eig = Vec::with_capacity(k);
        for (i, c) in covariances.iter().enumerate() {
            let asym = (c - c.transpose()).abs().max();
            if asym > T::lit(1e-9) * (T::one() + c.abs().max()) {
                return Err(Error::InvalidArgument(format!("covariance {i} is not symmetric")));
            }
            let l = PackedCholesky::factor(d, |r, s| c[(r, s)])
                .map_err(|_| Error::NotPositiveDefinite(format!("mixture covariance {i}")))?;
            let mut w = vec![T::zero(); d * (d + 1) / 2];
            for col in 0..d {
                let mut e = vec![T::zero(); d];
                e[col] = T::one();
                let x = l.solve_lower(&e);
                for row in col..d {
                    w[row * (row + 1) / 2 + col] = x[row];
                }
            }
            log_norm.push(weights[i].ln() - half_d_ln_2pi - T::lit(0.5) * l.log_det());
            let eig = c.clone().symmetric_eigenvalues();
            max_eig.push(eig.iter().fold(T::zero(), |a, &e| if e > a { e } else { a }));
            chol.push(l);
            whiten.push(w);
        }
        Ok(Self { weights, means, covariances, chol, whiten, log_norm, max_eig })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<T>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<T>] {
        &self.covariances
    }

    /// Mixture mean `Σ w_k μ_k`.
    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim()];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for (acc, &v) in m.iter_mut().zip(mu) {
                *acc += *w * v;
            }
        }
        m
    }

    /// `ln(w_k N(x; μ_k, Σ_k))` for one component.
    #[inline]
    pub fn component_log_density(&self, k: usize, x: &[T]) -> T {
        let d = self.dim();
        let mu = &self.means[k];
        let w = &self.whiten[k];
        let mut m2 = T::zero();
        for i in 0..d {
            let row = &w[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
            let mut y = T::zero();
            for j in 0..=i {
                y += row[j] * (x[j] - mu[j]);
            }
            m2 += y * y;
        }
        self.log_norm[k] - T::lit(0.5) * m2
    }

    pub fn log_pdf(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.dim());
        let neg_inf = T::lit(f64::NEG_INFINITY);
        let (mut max, mut sum) = (neg_inf, T::zero());
        for k in 0..self.n_components() {
            let l = self.component_log_density(k, x);
            if l == neg_inf || !l.is_finite_real() && l < T::zero() {
                continue;
            }
            if l > max {
                sum = sum * (max - l).exp() + T::one();
                max = l;
            } else {
                sum += (l - max).exp();
            }
        }
        if sum == T::zero() {
            neg_inf
        } else {
            max + sum.ln()
        }
    }

    /// Density `Σ_k w_k N(x; μ_k, Σ_k)`, evaluated through log-sum-exp.
    pub fn pdf(&self, x: &[T]) -> T {
        self.log_pdf(x).exp()
    }

    /// Radius around `μ_k` outside of which component `k` contributes at most
    /// `threshold`. `None` if it never exceeds it.
    pub fn component_radius(&self, k: usize, threshold: T) -> Option<T> {
        let rhs = T::lit(2.0) * (self.log_norm[k] - threshold.ln());
        if !(rhs > T::zero()) {
            return None;
        }
        Some((rhs * self.max_eig[k]).sqrt())
    }

    /// Draws the component index from the weights, then the point from it.
    pub fn sample_with_component<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<T>)
    where
        StandardNormal: Distribution<T>,
    {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.n_components() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w.as_f64();
            if u < acc {
                k = i;
                break;
            }
        }
        let d = self.dim();
        let z: Vec<T> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let l = &self.chol[k];
        let x = (0..d)
            .map(|i| {
                let row = l.row(i);
                let mut v = self.means[k][i];
                for j in 0..=i {
                    v += row[j] * z[j];
                }
                v
            })
            .collect();
        (k, x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T>
    where
        StandardNormal: Distribution<T>,
    {
        self.sample_with_component(rng).1
    }

    /// Number of free parameters of a full-covariance mixture.
    pub fn parameter_count(k: usize, d: usize) -> usize {
        k - 1 + k * d + k * d * (d + 1) / 2
    }
}

/// Result of an EM run.
#[derive(Clone, Debug)]
pub struct GmmFit<T: Real> {
    pub mixture: GaussianMixture<T>,
    pub log_likelihood: T,
    /// Log-likelihood after initialization and after every EM iteration.
    pub trace: Vec<T>,
    pub iterations: usize,
    /// Set when the input was degenerate (all points identical, `K > 1`).
    pub degenerate: bool,
}

fn validate_points<T: Real>(points: &[Vec<T>]) -> Result<usize> {
    let first = points.first().ok_or(Error::EmptyDataset)?;
    let d = first.len();
    if d == 0 {
        return Err(Error::InvalidArgument("zero-dimensional points".into()));
    }
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.len() });
        }
        if p.iter().any(|v| !v.is_finite_real()) {
            return Err(Error::InvalidArgument("non-finite point".into()));
        }
    }
    Ok(d)
}

/// Points sorted lexicographically and flattened row-major, so that fits do
/// not depend on input order.
fn canonical_flat<T: Real>(points: &[Vec<T>]) -> Vec<T> {
    let mut sorted: Vec<&Vec<T>> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.as_f64().total_cmp(&y.as_f64()))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    sorted.into_iter().flatten().copied().collect()
}

/// Mixture parameters in flat storage, as iterated by EM.
struct Params<T> {
    d: usize,
    weights: Vec<T>,
    // k × d
    means: Vec<T>,
    // k × d × d, row-major
    covs: Vec<T>,
}

/// Per-component constants for log-density evaluation.
struct Scorer<T> {
    d: usize,
    log_norm: Vec<T>,
    // packed lower inverse Cholesky factors, one block of d(d+1)/2 per component
    whiten: Vec<T>,
}

impl<T: Real> Params<T> {
    fn k(&self) -> usize {
        self.weights.len()
    }

    fn scorer(&self) -> Result<Scorer<T>> {
        let d = self.d;
        let tri = d * (d + 1) / 2;
        let half_d_ln_2pi = T::lit(0.5 * d as f64 * std::f64::consts::TAU.ln());
        let mut log_norm = Vec::with_capacity(self.k());
        let mut whiten = vec![T::zero(); tri * self.k()];
        let mut e = vec![T::zero(); d];
        for c in 0..self.k() {
            let cov = &self.covs[c * d * d..(c + 1) * d * d];
            let l = PackedCholesky::factor(d, |r, s| cov[r * d + s])?;
            let w = &mut whiten[c * tri..(c + 1) * tri];
            for col in 0..d {
                e.iter_mut().for_each(|v| *v = T::zero());
                e[col] = T::one();
                let x = l.solve_lower(&e);
                for row in col..d {
                    w[row * (row + 1) / 2 + col] = x[row];
                }
            }
            log_norm.push(self.weights[c].ln() - half_d_ln_2pi - T::lit(0.5) * l.log_det());
        }
        Ok(Scorer { d, log_norm, whiten })
    }

    fn into_mixture(self) -> Result<GaussianMixture<T>> {
        let d = self.d;
        let means = self.means.chunks(d).map(|m| m.to_vec()).collect();
        let covs = self.covs.chunks(d * d).map(|c| DMatrix::from_row_slice(d, d, c)).collect();
        GaussianMixture::new(self.weights, means, covs)
    }
}

impl<T: Real> Scorer<T> {
    #[inline]
    fn log_density(&self, c: usize, mu: &[T], x: &[T]) -> T {
        let d = self.d;
        let tri = d * (d + 1) / 2;
        let w = &self.whiten[c * tri..(c + 1) * tri];
        let mut m2 = T::zero();
        let mut start = 0;
        for i in 0..d {
            let mut y = T::zero();
            for j in 0..=i {
                y += w[start + j] * (x[j] - mu[j]);
            }
            start += i + 1;
            m2 += y * y;
        }
        self.log_norm[c] - T::lit(0.5) * m2
    }
}

/// E-step: fills responsibilities (row-major `n × k`) and returns the log-likelihood.
fn e_step<T: Real>(p: &Params<T>, xs: &[T], resp: &mut [T]) -> Result<T> {
    let s = p.scorer()?;
    let (d, k) = (p.d, p.k());
    let mut ll = T::zero();
    for (x, row) in xs.chunks_exact(d).zip(resp.chunks_exact_mut(k)) {
        let mut max = T::lit(f64::NEG_INFINITY);
        for (c, r) in row.iter_mut().enumerate() {
            *r = s.log_density(c, &p.means[c * d..(c + 1) * d], x);
            if *r > max {
                max = *r;
            }
        }
        let mut sum = T::zero();
        for r in row.iter_mut() {
            *r = (*r - max).exp();
            sum += *r;
        }
        for r in row.iter_mut() {
            *r /= sum;
        }
        ll += max + sum.ln();
    }
    Ok(ll)
}

/// M-step into `out`. Components with vanishing responsibility keep their
/// previous mean and covariance with zero weight.
fn m_step<T: Real>(xs: &[T], resp: &[T], prev: &Params<T>, out: &mut Params<T>) {
    let (d, k) = (prev.d, prev.k());
    let n = xs.len() / d;
    let ridge = T::lit(COVARIANCE_RIDGE);
    out.weights.iter_mut().for_each(|v| *v = T::zero());
    out.means.iter_mut().for_each(|v| *v = T::zero());
    out.covs.iter_mut().for_each(|v| *v = T::zero());
    for (x, row) in xs.chunks_exact(d).zip(resp.chunks_exact(k)) {
        for c in 0..k {
            let r = row[c];
            out.weights[c] += r;
            for j in 0..d {
                out.means[c * d + j] += r * x[j];
            }
        }
    }
    let live: Vec<bool> = out.weights.iter().map(|&nk| nk > T::lit(1e-12)).collect();
    for c in 0..k {
        if live[c] {
            let nk = out.weights[c];
            out.means[c * d..(c + 1) * d].iter_mut().for_each(|m| *m /= nk);
        }
    }
    for (x, row) in xs.chunks_exact(d).zip(resp.chunks_exact(k)) {
        for c in 0..k {
            if !live[c] {
                continue;
            }
            let r = row[c];
            let mu = &out.means[c * d..(c + 1) * d];
            let cov = &mut out.covs[c * d * d..(c + 1) * d * d];
            for a in 0..d {
                let da = r * (x[a] - mu[a]);
                for b in 0..=a {
                    cov[a * d + b] += da * (x[b] - mu[b]);
                }
            }
        }
    }
    let nf = T::from_count(n);
    for c in 0..k {
        if !live[c] {
            out.weights[c] = T::zero();
            out.means[c * d..(c + 1) * d].copy_from_slice(&prev.means[c * d..(c + 1) * d]);
            out.covs[c * d * d..(c + 1) * d * d].copy_from_slice(&prev.covs[c * d * d..(c + 1) * d * d]);
            continue;
        }
        let nk = out.weights[c];
        let cov = &mut out.covs[c * d * d..(c + 1) * d * d];
        for a in 0..d {
            for b in 0..=a {
                let v = cov[a * d + b] / nk;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
            cov[a * d + a] += ridge;
        }
        out.weights[c] = nk / nf;
    }
}

/// Unweighted mean and ridged covariance of the selected rows.
fn moments<T: Real>(xs: &[T], d: usize, rows: impl Iterator<Item = usize> + Clone) -> (usize, Vec<T>, Vec<T>) {
    let mut count = 0;
    let mut mean = vec![T::zero(); d];
    for i in rows.clone() {
        count += 1;
        for j in 0..d {
            mean[j] += xs[i * d + j];
        }
    }
    let cf = T::from_count(count.max(1));
    mean.iter_mut().for_each(|m| *m /= cf);
    let mut cov = vec![T::zero(); d * d];
    for i in rows {
        let x = &xs[i * d..(i + 1) * d];
        for a in 0..d {
            for b in 0..=a {
                cov[a * d + b] += (x[a] - mean[a]) * (x[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = cov[a * d + b] / cf;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
        cov[a * d + a] += T::lit(COVARIANCE_RIDGE);
    }
    (count, mean, cov)
}

/// k-means++ seeding followed by hard assignment to produce initial components.
fn kmeanspp_init<T: Real>(xs: &[T], d: usize, k: usize, rng: &mut ChaCha8Rng) -> Params<T> {
    let n = xs.len() / d;
    let pt = |i: usize| &xs[i * d..(i + 1) * d];
    let sq = |a: &[T], b: &[T]| a.iter().zip(b).fold(0.0, |s, (x, y)| s + (*x - *y).as_f64().powi(2));
    let mut centers: Vec<usize> = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq(pt(i), pt(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                if u < v {
                    pick = i;
                    break;
                }
                u -= v;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq(pt(i), pt(next)));
        }
    }
    let assign: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = (f64::INFINITY, 0);
            for (c, &ci) in centers.iter().enumerate() {
                let v = sq(pt(i), pt(ci));
                if v < best.0 {
                    best = (v, c);
                }
            }
            best.1
        })
        .collect();
    let (_, _, global_cov) = moments(xs, d, 0..n);
    let mut p = Params { d, weights: Vec::with_capacity(k), means: Vec::new(), covs: Vec::new() };
    let mut counts = Vec::with_capacity(k);
    for c in 0..k {
        let (count, mean, cov) = moments(xs, d, (0..n).filter(|&i| assign[i] == c));
        counts.push(count.max(1) as f64);
        if count > d {
            p.means.extend(mean);
            p.covs.extend(cov);
        } else {
            p.means.extend_from_slice(pt(centers[c]));
            p.covs.extend_from_slice(&global_cov);
        }
    }
    let total: f64 = counts.iter().sum();
    p.weights = counts.iter().map(|c| T::lit(c / total)).collect();
    p
}

/// Fits a `k`-component full-covariance mixture with EM from a k-means++ start.
pub fn fit_gmm_em<T: Real>(points: &[Vec<T>], k: usize, seed: u64) -> Result<GmmFit<T>> {
    let d = validate_points(points)?;
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let need = k * (d + 1);
    if points.len() < need {
        return Err(Error::TooFewPoints { components: k, have: points.len(), need });
    }
    let xs = canonical_flat(points);
    let n = points.len();
    let mut resp = vec![T::zero(); n * k];

    if k > 1 && xs.chunks_exact(d).all(|p| p == &xs[..d]) {
        let (_, mean, cov) = moments(&xs, d, 0..1);
        let w = T::one() / T::from_count(k);
        let p = Params { d, weights: vec![w; k], means: mean.repeat(k), covs: cov.repeat(k) };
        let ll = e_step(&p, &xs, &mut resp)?;
        let mixture = p.into_mixture()?;
        return Ok(GmmFit { mixture, log_likelihood: ll, trace: vec![ll], iterations: 0, degenerate: true });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = kmeanspp_init(&xs, d, k, &mut rng);
    let mut ll = e_step(&params, &xs, &mut resp)?;
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut next = Params { d, weights: vec![T::zero(); k], means: vec![T::zero(); k * d], covs: vec![T::zero(); k * d * d] };
    let mut next_resp = vec![T::zero(); n * k];
    while iterations < EM_MAX_ITERATIONS {
        m_step(&xs, &resp, &params, &mut next);
        let next_ll = match e_step(&next, &xs, &mut next_resp) {
            Ok(v) if v.is_finite_real() => v,
            _ => break,
        };
        iterations += 1;
        trace.push(next_ll);
        let improvement = next_ll - ll;
        std::mem::swap(&mut params, &mut next);
        std::mem::swap(&mut resp, &mut next_resp);
        ll = next_ll;
        if improvement < T::lit(EM_TOLERANCE) * T::from_count(n) {
            break;
        }
    }
    let mixture = params.into_mixture()?;
    Ok(GmmFit { mixture, log_likelihood: ll, trace, iterations, degenerate: false })
}

/// `−2 logL + p ln n`.
pub fn bic(log_likelihood: f64, k: usize, d: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + GaussianMixture::<f64>::parameter_count(k, d) as f64 * (n as f64).ln()
}

#[derive(Clone, Debug)]
pub struct BicSelection<T: Real> {
    pub best: GmmFit<T>,
    /// `(K, BIC)` for every component count that could be fitted.
    pub scores: Vec<(usize, f64)>,
}

/// Fits `K = 1..=k_max` and keeps the fit with the smallest BIC. Counts that
/// need more points than available are skipped.
pub fn select_k_bic<T: Real>(points: &[Vec<T>], k_max: usize, seed: u64) -> Result<BicSelection<T>> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    let d = validate_points(points)?;
    let n = points.len();
    let mut best: Option<(f64, GmmFit<T>)> = None;
    let mut scores = Vec::new();
    for k in 1..=k_max {
        if k > 1 && n < k * (d + 1) {
            break;
        }
        let fit = fit_gmm_em(points, k, seed.wrapping_add(k as u64))?;
        let score = bic(fit.log_likelihood.as_f64(), k, d, n);
        scores.push((k, score));
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, fit));
        }
    }
    let (_, best) = best.expect("K = 1 always fitted");
    Ok(BicSelection { best, scores })
}

/// Displacements of the `m` records whose actions are closest to `a` in
/// 1-norm; ties go to the lower dataset index. Linear scan.
pub fn nearest_action_subset(dataset: &[DatasetRecord], a: &ActionVec, m: usize) -> Result<Vec<Vec<f64>>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if m == 0 || m > dataset.len() {
        return Err(Error::InvalidArgument(format!("neighbor count {m} outside 1..={}", dataset.len())));
    }
    let q = a.features();
    let mut scored: Vec<(f64, usize)> = dataset
        .iter()
        .enumerate()
        .map(|(i, r)| (Metric::L1.distance(&r.action.features(), &q), i))
        .collect();
    scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    Ok(scored[..m].iter().map(|&(_, i)| dataset[i].delta.clone()).collect())
}

/// Source of per-action displacement densities `p(Δs | a)`.
pub trait LocalModel: Send + Sync {
    fn mixture(&self, a: &ActionVec) -> Result<Arc<GaussianMixture<f64>>>;
}

/// Draws single displacement outcomes for an action (used by state sampling).
pub trait DisplacementSampler: Send + Sync {
    fn sample_displacement(&self, a: &ActionVec, rng: &mut dyn RngCore) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalModelConfig {
    /// Size of the nearest-action subset.
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
    /// Largest component count tried by BIC.
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Fixed component count (bypasses BIC).
    #[serde(default)]
    pub force_k: Option<usize>,
    /// Memo-cache quantization: bins per action feature. `None` keys by the
    /// exact action.
    #[serde(default)]
    pub quantization_bins: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_neighbors() -> usize {
    200
}

fn default_k_max() -> usize {
    3
}

impl Default for LocalModelConfig {
    fn default() -> Self {
        Self { neighbors: default_neighbors(), k_max: default_k_max(), force_k: None, quantization_bins: None, seed: 0 }
    }
}

/// Memory-based density model over a static dataset, with a memo cache of
/// fitted mixtures.
pub struct DatasetModel {
    records: Arc<Vec<DatasetRecord>>,
    index: KdTree,
    space: ActionSpace,
    config: LocalModelConfig,
    memo: DashMap<Vec<u64>, Arc<GaussianMixture<f64>>>,
    fits: AtomicUsize,
}

impl std::fmt::Debug for DatasetModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DatasetModel")
            .field("records", &self.records.len())
            .field("config", &self.config)
            .field("cached", &self.memo.len())
            .finish()
    }
}

impl DatasetModel {
    pub fn new(records: Arc<Vec<DatasetRecord>>, space: ActionSpace, config: LocalModelConfig) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let fd = space.feature_dim();
        if let Some(r) = records.iter().find(|r| r.action.features().len() != fd) {
            return Err(Error::DimensionMismatch { expected: fd, got: r.action.features().len() });
        }
        if config.neighbors == 0 || config.neighbors > records.len() {
            return Err(Error::Config(format!(
                "neighbor count {} outside 1..={}",
                config.neighbors,
                records.len()
            )));
        }
        if config.k_max == 0 || config.force_k == Some(0) {
            return Err(Error::Config("component counts must be at least 1".into()));
        }
        let coords = records.iter().flat_map(|r| r.action.features()).collect();
        let index = KdTree::build(fd, coords, Metric::L1);
        Ok(Self { records, index, space, config, memo: DashMap::new(), fits: AtomicUsize::new(0) })
    }

    pub fn records(&self) -> &[DatasetRecord] {
        &self.records
    }

    pub fn config(&self) -> &LocalModelConfig {
        &self.config
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    /// Number of mixture fits performed so far (memo misses).
    pub fn fit_count(&self) -> usize {
        self.fits.load(AtomicOrdering::Relaxed)
    }

    /// Same result as [`nearest_action_subset`], through the k-d index.
    pub fn neighbor_indices(&self, a: &ActionVec) -> Vec<usize> {
        self.index.k_nearest(&a.features(), self.config.neighbors).into_iter().map(|(_, i)| i).collect()
    }

    pub fn neighbor_displacements(&self, a: &ActionVec) -> Vec<Vec<f64>> {
        self.neighbor_indices(a).into_iter().map(|i| self.records[i].delta.clone()).collect()
    }

    fn memo_key(&self, a: &ActionVec) -> (Vec<u64>, ActionVec) {
        match self.config.quantization_bins {
            None => (a.key(), a.clone()),
            Some(bins) => {
                let lo = self.space.feature_lo();
                let hi = self.space.feature_hi();
                let f = a.features();
                let mut key = Vec::with_capacity(f.len());
                let mut center = Vec::with_capacity(f.len());
                for i in 0..f.len() {
                    let width = hi[i] - lo[i];
                    if width <= 0.0 {
                        key.push(0);
                        center.push(lo[i]);
                        continue;
                    }
                    let cell = (((f[i] - lo[i]) / width * bins as f64).floor().max(0.0) as u64).min(bins as u64 - 1);
                    key.push(cell);
                    center.push(lo[i] + (cell as f64 + 0.5) / bins as f64 * width);
                }
                (key, ActionVec::from_features(&center))
            }
        }
    }

    /// Fits (without memoization) the local mixture for `a`.
    pub fn fit(&self, a: &ActionVec) -> Result<GaussianMixture<f64>> {
        let pts = self.neighbor_displacements(a);
        let fit = match self.config.force_k {
            Some(k) => fit_gmm_em(&pts, k, self.config.seed)?,
            None => select_k_bic(&pts, self.config.k_max, self.config.seed)?.best,
        };
        self.fits.fetch_add(1, AtomicOrdering::Relaxed);
        Ok(fit.mixture)
    }
}

impl LocalModel for DatasetModel {
    fn mixture(&self, a: &ActionVec) -> Result<Arc<GaussianMixture<f64>>> {
        let (key, at) = self.memo_key(a);
        if let Some(g) = self.memo.get(&key) {
            return Ok(g.clone());
        }
        let g = Arc::new(self.fit(&at)?);
        self.memo.insert(key, g.clone());
        Ok(g)
    }
}

impl DisplacementSampler for DatasetModel {
    /// Uniform draw among the displacements of the nearest-action subset.
    fn sample_displacement(&self, a: &ActionVec, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let idx = self.neighbor_indices(a);
        let pick = idx[rng.random_range(0..idx.len())];
        Ok(self.records[pick].delta.clone())
    }
}

/// CSV header for a dataset with `d_u` controls and `d_s` state dimensions.
pub fn dataset_header(control_dim: usize, state_dim: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=control_dim).map(|i| format!("u_{i}")).collect();
    h.push("dt".into());
    h.extend((1..=state_dim).map(|i| format!("ds_{i}")));
    h
}

/// Writes rows `u_1,…,u_{d_u},dt,ds_1,…,ds_{d_s}` with a header line.
pub fn write_dataset_csv<W: Write>(writer: W, records: &[DatasetRecord]) -> Result<()> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(dataset_header(first.action.control.len(), first.delta.len()))?;
    for r in records {
        let row: Vec<String> = r.action.features().iter().chain(&r.delta).map(|v| format!("{v:?}")).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(reader: R) -> Result<Vec<DatasetRecord>> {
    let mut rd = csv::Reader::from_reader(reader);
    let header = rd.headers()?.clone();
    let dt_col = header
        .iter()
        .position(|h| h == "dt")
        .ok_or_else(|| Error::Config("dataset header lacks a `dt` column".into()))?;
    let control_dim = dt_col;
    let state_dim = header.len() - dt_col - 1;
    if state_dim == 0 || header.iter().collect::<Vec<_>>() != dataset_header(control_dim, state_dim) {
        return Err(Error::Config(format!("unexpected dataset header {:?}", header)));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let vals = row
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("bad dataset value: {e}")))?;
        let action = ActionVec::new(vals[..control_dim].to_vec(), vals[control_dim]);
        out.push(DatasetRecord::new(action, vals[control_dim + 1..].to_vec())?);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}
