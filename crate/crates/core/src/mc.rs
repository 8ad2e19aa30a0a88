//! Deterministic parallel Monte Carlo accumulation.
//!
//! Trials are cut into fixed chunks of [`CHUNK`] consecutive indices. Each
//! chunk is folded sequentially, chunks run on the ambient rayon pool, and the
//! chunk partials are merged by a pairwise tree whose shape depends only on
//! the trial count. Results are therefore bit-identical for any worker count.

use rayon::prelude::*;

use crate::linalg::Matrix;

pub const CHUNK: u64 = 256;

/// Folds `step` over trial indices `0..trials` and merges partials in a fixed
/// pairwise order.
pub fn fold_trials<A, Z, S, M>(trials: u64, zero: Z, step: S, merge: M) -> A
where
    A: Send,
    Z: Fn() -> A + Sync,
    S: Fn(&mut A, u64) + Sync,
    M: Fn(A, A) -> A + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let partials: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = zero();
            for i in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                step(&mut acc, i);
            }
            acc
        })
        .collect();
    pairwise(partials, &merge).unwrap_or_else(zero)
}

fn pairwise<A, M: Fn(A, A) -> A>(mut items: Vec<A>, merge: &M) -> Option<A> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Running sums for the entrywise mean and standard error of a matrix-valued
/// statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMoments {
    pub count: u64,
    pub sum: Matrix,
    pub sum_sq: Matrix,
}

impl MatrixMoments {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            count: 0,
            sum: Matrix::zeros(rows, cols),
            sum_sq: Matrix::zeros(rows, cols),
        }
    }

    pub fn push(&mut self, x: &Matrix) {
        self.count += 1;
        self.sum += x;
        self.sum_sq.zip_apply(x, |s, v| *s += v * v);
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> Matrix {
        &self.sum / self.count.max(1) as f64
    }

    /// Entrywise standard error of the mean.
    pub fn std_error(&self) -> Matrix {
        let n = self.count as f64;
        if self.count < 2 {
            return Matrix::from_element(self.sum.nrows(), self.sum.ncols(), f64::INFINITY);
        }
        let mean = self.mean();
        Matrix::from_fn(self.sum.nrows(), self.sum.ncols(), |i, j| {
            let var = (self.sum_sq[(i, j)] - n * mean[(i, j)].powi(2)).max(0.0) / (n - 1.0);
            (var / n).sqrt()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScalarMoments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl ScalarMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count.max(1) as f64
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        let n = self.count as f64;
        let var = (self.sum_sq - n * self.mean().powi(2)).max(0.0) / (n - 1.0);
        (var / n).sqrt()
    }
}
