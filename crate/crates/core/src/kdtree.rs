//! Static k-d tree over `f64` points with exact, index-tie-broken queries.
//!
//! Results are identical to a linear scan that orders candidates by
//! `(distance, index)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    /// Sum of absolute coordinate differences.
    L1,
    /// Euclidean distance.
    L2,
}

impl Metric {
    /// Internal (monotone) distance: L1 as is, L2 squared.
    #[inline]
    fn raw(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        }
    }

    #[inline]
    fn raw_axis(self, d: f64) -> f64 {
        match self {
            Metric::L1 => d.abs(),
            Metric::L2 => d * d,
        }
    }

    #[inline]
    fn finish(self, raw: f64) -> f64 {
        match self {
            Metric::L1 => raw,
            Metric::L2 => raw.sqrt(),
        }
    }

    #[inline]
    fn to_raw(self, d: f64) -> f64 {
        match self {
            Metric::L1 => d,
            Metric::L2 => d * d,
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        self.finish(self.raw(a, b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    raw: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.raw.total_cmp(&other.raw).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug)]
pub struct KdTree {
    dim: usize,
    metric: Metric,
    coords: Vec<f64>,
    perm: Vec<usize>,
    axis: Vec<u16>,
}

impl KdTree {
    /// Builds from flat row-major coordinates (`len = n * dim`).
    pub fn build(dim: usize, coords: Vec<f64>, metric: Metric) -> Self {
        assert!(dim > 0 && coords.len().is_multiple_of(dim));
        let n = coords.len() / dim;
        let mut tree = Self { dim, metric, coords, perm: (0..n).collect(), axis: vec![0; n] };
        tree.split(0, n);
        tree
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    fn split(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF {
            return;
        }
        let dim = self.dim;
        let mut best_axis = 0;
        let mut best_spread = -1.0;
        for ax in 0..dim {
            let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
            for &p in &self.perm[lo..hi] {
                let v = self.coords[p * dim + ax];
                mn = mn.min(v);
                mx = mx.max(v);
            }
            if mx - mn > best_spread {
                best_spread = mx - mn;
                best_axis = ax;
            }
        }
        let mid = (lo + hi) / 2;
        let coords = &self.coords;
        self.perm[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            coords[a * dim + best_axis].total_cmp(&coords[b * dim + best_axis])
        });
        self.axis[mid] = best_axis as u16;
        self.split(lo, mid);
        self.split(mid + 1, hi);
    }

    /// The `k` nearest points as `(distance, index)`, sorted by distance then index.
    pub fn k_nearest(&self, query: &[f64], k: usize) -> Vec<(f64, usize)> {
        debug_assert_eq!(query.len(), self.dim);
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, self.len(), query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (self.metric.finish(c.raw), c.index)).collect()
    }

    /// Nearest point index (lowest index among equidistant points).
    pub fn nearest(&self, query: &[f64]) -> Option<(f64, usize)> {
        self.k_nearest(query, 1).into_iter().next()
    }

    fn offer(&self, p: usize, query: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        let c = Candidate { raw: self.metric.raw(self.point(p), query), index: p };
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().expect("non-empty") {
            heap.pop();
            heap.push(c);
        }
    }

    fn knn_rec(&self, lo: usize, hi: usize, query: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        if hi - lo <= LEAF {
            for i in lo..hi {
                self.offer(self.perm[i], query, k, heap);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let p = self.perm[mid];
        let ax = self.axis[mid] as usize;
        let diff = query[ax] - self.coords[p * self.dim + ax];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.knn_rec(near.0, near.1, query, k, heap);
        self.offer(p, query, k, heap);
        let bound = self.metric.raw_axis(diff);
        if heap.len() < k || bound <= heap.peek().expect("non-empty").raw {
            self.knn_rec(far.0, far.1, query, k, heap);
        }
    }

    /// Indices of all points within `radius` (inclusive), ascending.
    pub fn within(&self, query: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.within_into(query, radius, &mut out);
        out
    }

    /// Like [`KdTree::within`], appending to `out` after clearing it.
    pub fn within_into(&self, query: &[f64], radius: f64, out: &mut Vec<usize>) {
        out.clear();
        if radius >= 0.0 {
            self.within_rec(0, self.len(), query, self.metric.to_raw(radius), out);
        }
        out.sort_unstable();
    }

    fn within_rec(&self, lo: usize, hi: usize, query: &[f64], raw_r: f64, out: &mut Vec<usize>) {
        if hi - lo <= LEAF {
            for i in lo..hi {
                let p = self.perm[i];
                if self.metric.raw(self.point(p), query) <= raw_r {
                    out.push(p);
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let p = self.perm[mid];
        let ax = self.axis[mid] as usize;
        let diff = query[ax] - self.coords[p * self.dim + ax];
        if self.metric.raw(self.point(p), query) <= raw_r {
            out.push(p);
        }
        let bound = self.metric.raw_axis(diff);
        if diff < 0.0 {
            self.within_rec(lo, mid, query, raw_r, out);
            if bound <= raw_r {
                self.within_rec(mid + 1, hi, query, raw_r, out);
            }
        } else {
            self.within_rec(mid + 1, hi, query, raw_r, out);
            if bound <= raw_r {
                self.within_rec(lo, mid, query, raw_r, out);
            }
        }
    }
}
