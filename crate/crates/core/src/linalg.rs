//! Growable Cholesky factor stored as a packed lower triangle.
//!
//! Used by the GP posterior (one row appended per observation) and by the
//! greedy batch selector (one row appended per chosen action).

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower-triangular `L` with `L Lᵀ = A`, rows packed contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedCholesky<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Default for PackedCholesky<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl<T: Real> PackedCholesky<T> {
    pub fn new() -> Self {
        Self { n: 0, data: Vec::new() }
    }

    /// Factors a dense symmetric matrix given as a row accessor.
    pub fn factor(n: usize, entry: impl Fn(usize, usize) -> T) -> Result<Self> {
        let mut chol = Self { n: 0, data: Vec::with_capacity(row_start(n)) };
        let mut row = Vec::with_capacity(n);
        for i in 0..n {
            row.clear();
            row.extend((0..i).map(|j| entry(i, j)));
            chol.push(&row, entry(i, i))?;
        }
        Ok(chol)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(j <= i && i < self.n);
        self.data[row_start(i) + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[row_start(i)..row_start(i) + i + 1]
    }

    /// Schur complement `diag - |L⁻¹ cross|²` of a prospective new row, and
    /// the solved vector `L⁻¹ cross`.
    pub fn schur(&self, cross: &[T], diag: T) -> (T, Vec<T>) {
        let v = self.solve_lower(cross);
        let mut s = diag;
        for &x in &v {
            s -= x * x;
        }
        (s, v)
    }

    /// Extends the factored matrix by one row/column. `cross` holds the new
    /// off-diagonal entries against the existing rows.
    pub fn push(&mut self, cross: &[T], diag: T) -> Result<()> {
        if cross.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: cross.len() });
        }
        let (s, v) = self.schur(cross, diag);
        if !(s > T::zero()) || !s.is_finite_real() {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {} at row {}",
                s.as_f64(),
                self.n
            )));
        }
        self.data.extend(v);
        self.data.push(s.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        debug_assert_eq!(b.len(), self.n);
        let mut x = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let mut acc = b[i];
            for j in 0..i {
                acc -= row[j] * x[j];
            }
            x.push(acc / row[i]);
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[T]) -> Vec<T> {
        debug_assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        for i in (0..self.n).rev() {
            x[i] /= self.get(i, i);
            let xi = x[i];
            let row = self.row(i);
            for j in 0..i {
                x[j] -= row[j] * xi;
            }
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn log_det(&self) -> T {
        let mut acc = T::zero();
        for i in 0..self.n {
            acc += self.get(i, i).ln();
        }
        acc + acc
    }

    /// Reconstructs `A = L Lᵀ` (row-major dense).
    pub fn reconstruct(&self) -> Vec<T> {
        let n = self.n;
        let mut a = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut acc = T::zero();
                for k in 0..=j {
                    acc += self.get(i, k) * self.get(j, k);
                }
                a[i * n + j] = acc;
                a[j * n + i] = acc;
            }
        }
        a
    }
}
