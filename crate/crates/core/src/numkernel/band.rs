//! Banded matrices with LU factorization under partial pivoting.
//!
//! Collocation Jacobians only couple neighbouring mesh nodes, so their
//! nonzeros sit inside a band of width roughly three node blocks. Rows are
//! stored with `kl` extra slots on the right to absorb pivoting fill-in.

use super::linalg::SINGULAR_PIVOT_RATIO;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    /// Zero `n×n` matrix with `kl` sub- and `ku` super-diagonals.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn in_pattern(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_pattern(i, j) {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` at `(i, j)`. Panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_pattern(i, j),
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_pattern(i, j), "entry ({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// LU factorization with row partial pivoting, consuming the matrix.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let max_row = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(kl);
                let hi = (i + ku).min(n.saturating_sub(1));
                (lo..=hi).map(|j| self.get(i, j).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max);
        let threshold = SINGULAR_PIVOT_RATIO * max_row;
        let mut pivots = vec![0usize; n];

        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for r in (k + 1)..=last_row {
                let v = self.data[self.slot(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best >= threshold) || best == 0.0 {
                return Err(Error::SingularMatrix {
                    column: k,
                    pivot: best,
                    threshold,
                });
            }
            pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let a = self.slot(k, j);
                    let b = self.slot(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for r in (k + 1)..=last_row {
                let sr = self.slot(r, k);
                let l = self.data[sr] / pivot;
                self.data[sr] = l;
                if l == 0.0 {
                    continue;
                }
                for j in (k + 1)..=last_col {
                    let u = self.data[self.slot(k, j)];
                    let s = self.slot(r, j);
                    self.data[s] -= l * u;
                }
            }
        }
        Ok(BandLu { lu: self, pivots })
    }
}

/// Factors produced by [`BandMatrix::factor`].
#[derive(Clone, Debug)]
pub struct BandLu {
    lu: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let a = &self.lu;
        let n = a.n;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let xk = x[k];
            if xk != 0.0 {
                for r in (k + 1)..=(k + a.kl).min(n - 1) {
                    x[r] -= a.data[a.slot(r, k)] * xk;
                }
            }
        }
        for i in (0..n).rev() {
            let last_col = (i + a.kl + a.ku).min(n - 1);
            let mut s = x[i];
            for j in (i + 1)..=last_col {
                s -= a.data[a.slot(i, j)] * x[j];
            }
            x[i] = s / a.data[a.slot(i, i)];
        }
        x
    }
}
