//! Gaussian-process regression with a Matérn-5/2 ARD kernel.
//!
//! Observations are appended one at a time to a packed Cholesky factor of
//! `K + σ²I`. Targets may be stored under an affine output transform; the
//! posterior is reported in raw units.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ActionVec;
use crate::error::{Error, Result};
use crate::linalg::PackedCholesky;
use crate::scalar::Real;

/// Nelder–Mead evaluations per start in [`GpPosterior::refit_hyperparameters`].
pub const REFIT_EVALUATIONS: usize = 64;
pub const REFIT_STARTS: usize = 4;

// bounds on log-parameters during refits
const LOG_SIGNAL_BOUNDS: (f64, f64) = (-9.2, 9.2);
const LOG_LENGTH_BOUNDS: (f64, f64) = (-6.9, 6.9);
const LOG_NOISE_BOUNDS: (f64, f64) = (-18.4, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec<T> {
    pub signal_variance: T,
    pub lengthscales: Vec<T>,
    pub noise_variance: T,
}

impl<T: Real> KernelSpec<T> {
    pub fn new(signal_variance: T, lengthscales: Vec<T>, noise_variance: T) -> Result<Self> {
        let k = Self { signal_variance, lengthscales, noise_variance };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v > T::zero() && v.is_finite_real();
        if self.lengthscales.is_empty()
            || !ok(self.signal_variance)
            || !ok(self.noise_variance)
            || !self.lengthscales.iter().all(|&l| ok(l))
        {
            return Err(Error::InvalidArgument("kernel parameters must be finite and positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Lengthscale-scaled Euclidean distance.
    #[inline]
    pub fn scaled_distance(&self, a: &[T], b: &[T]) -> T {
        let mut s = T::zero();
        for ((x, y), l) in a.iter().zip(b).zip(&self.lengthscales) {
            let d = (*x - *y) / *l;
            s += d * d;
        }
        s.sqrt()
    }

    /// `σ_f² (1 + √5 r + 5r²/3) exp(−√5 r)`.
    #[inline]
    pub fn eval(&self, a: &[T], b: &[T]) -> T {
        let r = self.scaled_distance(a, b);
        let s5r = T::lit(5f64.sqrt()) * r;
        self.signal_variance * (T::one() + s5r + s5r * s5r / T::lit(3.0)) * (-s5r).exp()
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v = vec![self.signal_variance.as_f64().ln()];
        v.extend(self.lengthscales.iter().map(|l| l.as_f64().ln()));
        v.push(self.noise_variance.as_f64().ln());
        v
    }

    fn from_log(theta: &[f64]) -> Self {
        let n = theta.len();
        Self {
            signal_variance: T::lit(theta[0].exp()),
            lengthscales: theta[1..n - 1].iter().map(|t| T::lit(t.exp())).collect(),
            noise_variance: T::lit(theta[n - 1].exp()),
        }
    }
}

/// Matérn-5/2 covariance between two actions (features: controls, duration).
pub fn kernel_eval(k: &KernelSpec<f64>, a1: &ActionVec, a2: &ActionVec) -> f64 {
    k.eval(&a1.features(), &a2.features())
}

/// Targets are modelled as `(y − shift) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputTransform<T> {
    pub shift: T,
    pub scale: T,
}

impl<T: Real> OutputTransform<T> {
    pub fn identity() -> Self {
        Self { shift: T::zero(), scale: T::one() }
    }

    /// Median / inter-quartile-range scaling; falls back to the range, then 1.
    pub fn robust(ys: &[T]) -> Self {
        if ys.is_empty() {
            return Self::identity();
        }
        let mut v: Vec<f64> = ys.iter().map(|y| y.as_f64()).collect();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        };
        let iqr = q(0.75) - q(0.25);
        let range = v[v.len() - 1] - v[0];
        let scale = if iqr > 1e-12 {
            iqr
        } else if range > 1e-12 {
            range
        } else {
            1.0
        };
        Self { shift: T::lit(q(0.5)), scale: T::lit(scale) }
    }

    #[inline]
    fn forward(&self, y: T) -> T {
        (y - self.shift) / self.scale
    }
}

#[derive(Clone, Debug)]
pub struct GpPosterior<T: Real> {
    kernel: KernelSpec<T>,
    transform: OutputTransform<T>,
    xs: Vec<Vec<T>>,
    ys: Vec<T>,
    chol: PackedCholesky<T>,
    alpha: Vec<T>,
}

impl<T: Real> GpPosterior<T> {
    pub fn new(kernel: KernelSpec<T>) -> Result<Self> {
        kernel.validate()?;
        Ok(Self {
            kernel,
            transform: OutputTransform::identity(),
            xs: Vec::new(),
            ys: Vec::new(),
            chol: PackedCholesky::new(),
            alpha: Vec::new(),
        })
    }

    /// Builds a posterior over a full data set (dense factorization).
    pub fn fit(kernel: KernelSpec<T>, transform: OutputTransform<T>, xs: Vec<Vec<T>>, ys: Vec<T>) -> Result<Self> {
        kernel.validate()?;
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
        }
        let noise = kernel.noise_variance;
        let chol = PackedCholesky::factor(xs.len(), |i, j| {
            kernel.eval(&xs[i], &xs[j]) + if i == j { noise } else { T::zero() }
        })?;
        let mut g = Self { kernel, transform, xs, ys, chol, alpha: Vec::new() };
        g.resolve();
        Ok(g)
    }

    fn resolve(&mut self) {
        let t: Vec<T> = self.ys.iter().map(|&y| self.transform.forward(y)).collect();
        self.alpha = self.chol.solve(&t);
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn transform(&self) -> OutputTransform<T> {
        self.transform
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<T>] {
        &self.xs
    }

    pub fn targets(&self) -> &[T] {
        &self.ys
    }

    pub fn factor(&self) -> &PackedCholesky<T> {
        &self.chol
    }

    pub fn set_transform(&mut self, transform: OutputTransform<T>) {
        self.transform = transform;
        self.resolve();
    }

    /// Appends one observation (rank-one extension of the factor).
    pub fn observe(&mut self, x: Vec<T>, y: T) -> Result<()> {
        if x.len() != self.kernel.dim() {
            return Err(Error::DimensionMismatch { expected: self.kernel.dim(), got: x.len() });
        }
        if !y.is_finite_real() || x.iter().any(|v| !v.is_finite_real()) {
            return Err(Error::InvalidArgument("observations must be finite".into()));
        }
        let cross: Vec<T> = self.xs.iter().map(|xi| self.kernel.eval(xi, &x)).collect();
        let diag = self.kernel.eval(&x, &x) + self.kernel.noise_variance;
        self.chol.push(&cross, diag)?;
        self.xs.push(x);
        self.ys.push(y);
        self.resolve();
        Ok(())
    }

    /// Returns the posterior with one more observation.
    pub fn update(&self, x: Vec<T>, y: T) -> Result<Self> {
        let mut g = self.clone();
        g.observe(x, y)?;
        Ok(g)
    }

    /// Posterior mean and standard deviation at `x`, in raw target units.
    pub fn predict(&self, x: &[T]) -> (T, T) {
        let prior = self.kernel.eval(x, x);
        let (s, m) = (self.transform.scale, self.transform.shift);
        if self.is_empty() {
            return (m, s * prior.sqrt());
        }
        let k: Vec<T> = self.xs.iter().map(|xi| self.kernel.eval(xi, x)).collect();
        let mut mu = T::zero();
        for (ki, ai) in k.iter().zip(&self.alpha) {
            mu += *ki * *ai;
        }
        let (var, _) = self.chol.schur(&k, prior);
        let var = if var > T::zero() { var } else { T::zero() };
        (m + s * mu, s * var.sqrt())
    }

    /// Log marginal likelihood of the transformed targets.
    pub fn log_marginal_likelihood(&self) -> T {
        let n = self.len();
        let t: Vec<T> = self.ys.iter().map(|&y| self.transform.forward(y)).collect();
        let mut fit = T::zero();
        for (ti, ai) in t.iter().zip(&self.alpha) {
            fit += *ti * *ai;
        }
        -T::lit(0.5) * fit - T::lit(0.5) * self.chol.log_det() - T::lit(0.5 * n as f64 * std::f64::consts::TAU.ln())
    }

    fn likelihood_at(&self, theta: &[f64]) -> f64 {
        let kernel = KernelSpec::<T>::from_log(theta);
        match Self::fit(kernel, self.transform, self.xs.clone(), self.ys.clone()) {
            Ok(g) => {
                let ll = g.log_marginal_likelihood().as_f64();
                if ll.is_finite() {
                    ll
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Maximizes the marginal likelihood over log-parameters with a seeded
    /// multi-start Nelder–Mead search. Never returns a worse likelihood than
    /// the incoming one; with fewer than 3 observations returns `self`.
    pub fn refit_hyperparameters(&self, seed: u64) -> Self {
        if self.len() < 3 {
            return self.clone();
        }
        let d = self.kernel.dim();
        let mut lo = vec![LOG_SIGNAL_BOUNDS.0];
        let mut hi = vec![LOG_SIGNAL_BOUNDS.1];
        lo.extend(std::iter::repeat_n(LOG_LENGTH_BOUNDS.0, d));
        hi.extend(std::iter::repeat_n(LOG_LENGTH_BOUNDS.1, d));
        lo.push(LOG_NOISE_BOUNDS.0);
        hi.push(LOG_NOISE_BOUNDS.1);
        let clamp = |v: &mut Vec<f64>| {
            for ((x, l), h) in v.iter_mut().zip(&lo).zip(&hi) {
                *x = x.clamp(*l, *h);
            }
        };

        let incoming = self.log_marginal_likelihood().as_f64();
        let base = self.kernel.to_log();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = (incoming, base.clone());
        for start in 0..REFIT_STARTS {
            let mut x0 = base.clone();
            if start > 0 {
                for v in x0.iter_mut() {
                    *v += rng.random_range(-2.0..2.0);
                }
            }
            clamp(&mut x0);
            let (f, x) = nelder_mead(
                |theta: &[f64]| {
                    let mut t = theta.to_vec();
                    clamp(&mut t);
                    -self.likelihood_at(&t)
                },
                &x0,
                0.5,
                REFIT_EVALUATIONS,
            );
            if -f > best.0 {
                let mut x = x;
                clamp(&mut x);
                best = (-f, x);
            }
        }
        if best.0 > incoming {
            let kernel = KernelSpec::from_log(&best.1);
            if let Ok(g) = Self::fit(kernel, self.transform, self.xs.clone(), self.ys.clone()) {
                if g.log_marginal_likelihood().as_f64() >= incoming {
                    return g;
                }
            }
        }
        self.clone()
    }
}

/// Minimizes `f` with a budget of `max_evals` evaluations. Returns the best
/// value and point seen.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_evals: usize) -> (f64, Vec<f64>) {
    let n = x0.len();
    let mut evals = 0;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n + 1);
    simplex.push((eval(x0, &mut evals), x0.to_vec()));
    for i in 0..n {
        if evals >= max_evals {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push((eval(&x, &mut evals), x));
    }
    let order = |s: &mut Vec<(f64, Vec<f64>)>| s.sort_by(|a, b| a.0.total_cmp(&b.0));
    order(&mut simplex);
    if simplex.len() < n + 1 {
        return simplex.swap_remove(0);
    }
    while evals < max_evals {
        let worst = simplex[n].clone();
        let mut centroid = vec![0.0; n];
        for (_, x) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.1).map(|(c, w)| c + t * (w - c)).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].0 {
            if evals >= max_evals {
                simplex[n] = (fr, xr);
                break;
            }
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (fe, xe) } else { (fr, xr) };
        } else if fr < simplex[n - 1].0 {
            simplex[n] = (fr, xr);
        } else {
            if evals >= max_evals {
                break;
            }
            let xc = if fr < worst.0 { along(-0.5) } else { along(0.5) };
            let fc = eval(&xc, &mut evals);
            if fc < worst.0.min(fr) {
                simplex[n] = (fc, xc);
            } else {
                let best = simplex[0].1.clone();
                for item in simplex.iter_mut().skip(1) {
                    if evals >= max_evals {
                        break;
                    }
                    let x: Vec<f64> = best.iter().zip(&item.1).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    *item = (eval(&x, &mut evals), x);
                }
            }
        }
        order(&mut simplex);
    }
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::Rng;

    fn kernel(d: usize) -> KernelSpec<f64> {
        KernelSpec::new(1.3, (0..d).map(|i| 0.3 + 0.2 * i as f64).collect(), 1e-4).unwrap()
    }

    fn random_gp(n: usize, d: usize, seed: u64) -> GpPosterior<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = GpPosterior::new(kernel(d)).unwrap();
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            let y = (3.0 * x[0]).sin() + x.iter().sum::<f64>();
            g.observe(x, y).unwrap();
        }
        g
    }

    /// Dense LU solve of the posterior equations.
    fn dense(g: &GpPosterior<f64>, x: &[f64]) -> (f64, f64) {
        let n = g.len();
        let k = g.kernel();
        let kmat = DMatrix::from_fn(n, n, |i, j| {
            k.eval(&g.inputs()[i], &g.inputs()[j]) + if i == j { k.noise_variance } else { 0.0 }
        });
        let kx = DVector::from_fn(n, |i, _| k.eval(&g.inputs()[i], x));
        let t = g.transform();
        let y = DVector::from_fn(n, |i, _| (g.targets()[i] - t.shift) / t.scale);
        let lu = kmat.lu();
        let mu = kx.dot(&lu.solve(&y).unwrap());
        let var = k.eval(x, x) - kx.dot(&lu.solve(&kx).unwrap());
        (t.shift + t.scale * mu, t.scale * var.max(0.0).sqrt())
    }

    #[test]
    fn kernel_basics() {
        let k = kernel(2);
        assert_eq!(k.eval(&[0.2, 0.4], &[0.2, 0.4]), 1.3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let a = [rng.random::<f64>(), rng.random()];
            let b = [rng.random::<f64>(), rng.random()];
            assert_eq!(k.eval(&a, &b), k.eval(&b, &a));
        }
        let k1 = KernelSpec::new(1.0, vec![1.0], 1e-4).unwrap();
        let mut last = k1.eval(&[0.0], &[1.0]);
        for i in 1..200 {
            let v = k1.eval(&[0.0], &[1.0 + 0.1 * i as f64]);
            assert!(v < last && v >= 0.0);
            last = v;
        }
        assert!(last < 1e-6);
        assert!(KernelSpec::new(1.0, vec![0.0], 1e-4).is_err());
        let a = ActionVec::new(vec![0.1], 1.0);
        assert_eq!(kernel_eval(&kernel(2), &a, &a), 1.3);
    }

    #[test]
    fn prior_and_single_observation() {
        let g = GpPosterior::new(kernel(1)).unwrap();
        let (mu, sd) = g.predict(&[0.4]);
        assert_eq!(mu, 0.0);
        assert!((sd - 1.3f64.sqrt()).abs() < 1e-15);
        let g = g.update(vec![0.4], 2.0).unwrap();
        let (mu, _) = g.predict(&[0.4]);
        assert!((mu - 2.0 * 1.3 / (1.3 + 1e-4)).abs() < 1e-12);
    }

    #[test]
    fn interpolates_with_tiny_noise() {
        let mut g = GpPosterior::<f64>::new(KernelSpec::new(1.0, vec![0.5], 1e-10).unwrap()).unwrap();
        for (x, y) in [(0.1, 1.0), (0.5, -2.0), (0.9, 0.5)] {
            g.observe(vec![x], y).unwrap();
        }
        assert!((g.predict(&[0.5]).0 + 2.0).abs() < 1e-6);
    }

    #[test]
    fn matches_dense_solve() {
        for seed in 0..3 {
            let mut g = random_gp(20, 2, seed);
            g.set_transform(OutputTransform::robust(g.targets()));
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            for _ in 0..50 {
                let x = [rng.random::<f64>(), rng.random()];
                let (m, s) = g.predict(&x);
                let (dm, ds) = dense(&g, &x);
                assert!((m - dm).abs() < 1e-8 * (1.0 + dm.abs()));
                assert!((s - ds).abs() < 1e-8 * (1.0 + ds));
            }
        }
    }

    #[test]
    fn factor_reconstructs_gram_matrix() {
        let g = random_gp(30, 3, 4);
        let n = g.len();
        let rec = g.factor().reconstruct();
        let k = g.kernel();
        let (mut err, mut norm) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let want = k.eval(&g.inputs()[i], &g.inputs()[j]) + if i == j { k.noise_variance } else { 0.0 };
                err += (rec[i * n + j] - want).powi(2);
                norm += want * want;
            }
        }
        assert!((err / norm).sqrt() < 1e-8);
    }

    #[test]
    fn incremental_equals_batch_and_is_order_free() {
        let g = random_gp(15, 2, 5);
        let batch =
            GpPosterior::fit(g.kernel().clone(), g.transform(), g.inputs().to_vec(), g.targets().to_vec()).unwrap();
        let mut rev = GpPosterior::new(g.kernel().clone()).unwrap();
        for i in (0..g.len()).rev() {
            rev.observe(g.inputs()[i].clone(), g.targets()[i]).unwrap();
        }
        for i in 0..=10 {
            let x = [i as f64 / 10.0, 0.5];
            let (a, b, c) = (g.predict(&x), batch.predict(&x), rev.predict(&x));
            assert!((a.0 - b.0).abs() < 1e-10 && (a.1 - b.1).abs() < 1e-10);
            assert!((a.0 - c.0).abs() < 1e-9 && (a.1 - c.1).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_observation_keeps_mean() {
        let g = random_gp(10, 2, 6);
        let x = g.inputs()[3].clone();
        let y = g.predict(&x).0;
        let g2 = g.update(x.clone(), y).unwrap();
        assert!((g2.predict(&x).0 - y).abs() < 1e-8);
    }

    #[test]
    fn variance_shrinks_with_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let grid: Vec<[f64; 2]> = (0..11).flat_map(|i| (0..11).map(move |j| [i as f64 / 10.0, j as f64 / 10.0])).collect();
        let mut g = GpPosterior::new(kernel(2)).unwrap();
        let mut last: Vec<f64> = grid.iter().map(|x| g.predict(x).1).collect();
        for _ in 0..25 {
            g.observe(vec![rng.random(), rng.random()], rng.random()).unwrap();
            let now: Vec<f64> = grid.iter().map(|x| g.predict(x).1).collect();
            for ((x, a), b) in grid.iter().zip(&now).zip(&last) {
                assert!(a * a <= b * b + 1e-9);
                assert!(a * a <= g.kernel().eval(x, x) + 1e-9);
            }
            last = now;
        }
    }

    #[test]
    fn refit_never_decreases_likelihood() {
        for seed in 0..4 {
            let g = random_gp(12, 2, 10 + seed);
            let r = g.refit_hyperparameters(seed);
            assert!(r.log_marginal_likelihood() >= g.log_marginal_likelihood());
        }
        let tiny = random_gp(2, 2, 0);
        assert_eq!(tiny.refit_hyperparameters(0).kernel(), tiny.kernel());
    }

    #[test]
    fn refit_reaches_generating_likelihood() {
        // draw targets from the prior with a known kernel
        let truth = KernelSpec::new(2.0, vec![0.4], 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<Vec<f64>> = (0..25).map(|_| vec![rng.random::<f64>()]).collect();
        let chol = PackedCholesky::factor(xs.len(), |i, j| {
            truth.eval(&xs[i], &xs[j]) + if i == j { truth.noise_variance } else { 0.0 }
        })
        .unwrap();
        let z: Vec<f64> = (0..xs.len()).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let ys: Vec<f64> = (0..xs.len()).map(|i| (0..=i).map(|j| chol.get(i, j) * z[j]).sum()).collect();
        let at_truth = GpPosterior::fit(truth, OutputTransform::identity(), xs.clone(), ys.clone()).unwrap();
        let start = KernelSpec::new(1.0, vec![0.2], 1e-4).unwrap();
        let g = GpPosterior::fit(start, OutputTransform::identity(), xs, ys).unwrap();
        let r = g.refit_hyperparameters(3);
        assert!(r.log_marginal_likelihood() >= at_truth.log_marginal_likelihood() - 1e-6);
    }

    #[test]
    fn constant_targets_grow_lengthscales() {
        let mut grown = 0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = KernelSpec::new(1.0, vec![0.2, 0.2], 1e-4).unwrap();
            let mut g = GpPosterior::new(init.clone()).unwrap();
            for _ in 0..10 {
                g.observe(vec![rng.random(), rng.random()], 5.0).unwrap();
            }
            let r = g.refit_hyperparameters(seed);
            grown += r.kernel().lengthscales.iter().zip(&init.lengthscales).all(|(a, b)| a > b) as usize;
        }
        assert!(grown >= 9, "{grown}/10");
    }

    #[test]
    fn robust_transform() {
        let t = OutputTransform::robust(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!((t.shift, t.scale), (3.0, 2.0));
        assert_eq!(OutputTransform::robust(&[7.0, 7.0]).scale, 1.0);
        let t = OutputTransform::robust(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0]);
        assert_eq!(t.scale, 10.0);
    }

    #[test]
    fn single_precision_posterior() {
        let mut g = GpPosterior::<f32>::new(KernelSpec::new(1.0, vec![0.5], 1e-3).unwrap()).unwrap();
        g.observe(vec![0.2], 1.0).unwrap();
        g.observe(vec![0.8], -1.0).unwrap();
        let (m, s) = g.predict(&[0.2]);
        assert!((m - 1.0f32).abs() < 0.01 && s < 0.1);
    }

    #[test]
    fn nelder_mead_minimizes_quadratic() {
        let (f, x) = nelder_mead(|x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2), &[0.0, 0.0], 0.5, 400);
        assert!(f < 1e-8 && (x[0] - 1.0).abs() < 1e-3 && (x[1] + 2.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn posterior_variance_below_prior(seed in 0u64..1000, qx in 0.0f64..1.0, qy in 0.0f64..1.0) {
            let g = random_gp(8, 2, seed);
            let (_, s) = g.predict(&[qx, qy]);
            prop_assert!(s * s <= g.kernel().eval(&[qx, qy], &[qx, qy]) + 1e-9);
        }
    }
}
