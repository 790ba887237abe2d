//! Symmetric banded matrices and their Cholesky factorization.

use crate::error::{Error, Result};

/// Symmetric matrix stored as its lower band: entry `(i, j)` with
/// `i - bw <= j <= i` lives at `i * (bw + 1) + (i - j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn at(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw, "entry outside band");
        i * (self.bw + 1) + (i - j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.bw {
            0.0
        } else {
            self.data[self.at(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)` (and its mirror).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.at(i, j);
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[i * (self.bw + 1) + (i - j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Cholesky factorization; fails on a non-positive pivot.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let mut s = self.data[i * w + (i - j)];
                let kl = lo.max(j.saturating_sub(self.bw));
                for k in kl..j {
                    s -= self.data[i * w + (i - k)] * self.data[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    self.data[i * w] = s.sqrt();
                } else {
                    self.data[i * w + (i - j)] = s / self.data[j * w];
                }
            }
        }
        Ok(BandCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: SymBand,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.n;
        let bw = self.l.bw;
        let w = bw + 1;
        let d = &self.l.data;
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for k in lo..i {
                s -= d[i * w + (i - k)] * y[k];
            }
            y[i] = s / d[i * w];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            let hi = (i + bw).min(n - 1);
            for k in i + 1..=hi {
                s -= d[k * w + (k - i)] * y[k];
            }
            y[i] = s / d[i * w];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn solves_diagonally_dominant_systems(
            n in 1usize..30,
            bw in 0usize..5,
            seed in prop::collection::vec(-1.0..1.0f64, 200),
            rhs in prop::collection::vec(-10.0..10.0f64, 30),
        ) {
            let mut a = SymBand::zeros(n, bw);
            let mut s = seed.iter().cycle();
            for i in 0..n {
                a.add(i, i, 2.0 * (bw as f64 + 1.0));
                for j in i.saturating_sub(bw)..i {
                    a.add(i, j, *s.next().unwrap());
                }
            }
            let b = &rhs[..n];
            let x = a.clone().cholesky().unwrap().solve(b);
            let r = a.matvec(&x);
            for i in 0..n {
                prop_assert!((r[i] - b[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut a = SymBand::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(matches!(
            a.cholesky(),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
    }
}
