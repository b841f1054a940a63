//! Banded LU factorization with optional dense border.
//!
//! The matrix has the block form
//!
//! ```text
//! [ B  C ]   B: n x n with |i - j| <= w
//! [ R  D ]   C: n x m, R: m x n, D: m x m
//! ```
//!
//! The first `n - m` columns of `B` are eliminated with partial pivoting
//! inside the band; the remaining `2m x 2m` trailing block (last `m` columns
//! of `B` plus the border) is factored densely. This keeps bordered systems
//! solvable when `B` alone is singular along one direction, which is the
//! situation of a Newton step on a homogeneous eigenproblem.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    w: usize,
    m: usize,
    /// Row-major band storage, row `i` holds columns `i - w ..= i + 2w`.
    band: Vec<T>,
    col: Vec<T>,
    row: Vec<T>,
    corner: Vec<T>,
}

impl<T: Real> BandMatrix<T> {
    pub fn new(n: usize, bandwidth: usize, border: usize) -> Self {
        let stride = 3 * bandwidth + 1;
        Self {
            n,
            w: bandwidth,
            m: border,
            band: vec![T::zero(); n * stride],
            col: vec![T::zero(); n * border],
            row: vec![T::zero(); border * n],
            corner: vec![T::zero(); border * border],
        }
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    #[inline]
    fn stride(&self) -> usize {
        3 * self.w + 1
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.w >= i && j <= i + 2 * self.w, "({i},{j}) outside band");
        i * self.stride() + (j + self.w - i)
    }

    /// Adds `v` to core entry `(i, j)`; `|i - j|` must not exceed the bandwidth.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(i.abs_diff(j) <= self.w, "entry ({i},{j}) outside bandwidth {}", self.w);
        let s = self.slot(i, j);
        self.band[s] = self.band[s] + v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if j + self.w < i || j > i + 2 * self.w {
            T::zero()
        } else {
            self.band[self.slot(i, j)]
        }
    }

    pub fn set_border_column(&mut self, k: usize, values: &[T]) {
        for (i, &v) in values.iter().enumerate() {
            self.col[i * self.m + k] = v;
        }
    }

    pub fn set_border_row(&mut self, k: usize, values: &[T]) {
        self.row[k * self.n..(k + 1) * self.n].copy_from_slice(values);
    }

    pub fn set_corner(&mut self, k: usize, l: usize, v: T) {
        self.corner[k * self.m + l] = v;
    }

    /// Matrix-vector product with the unfactored matrix.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let (n, m, w) = (self.n, self.m, self.w);
        let mut y = vec![T::zero(); n + m];
        for i in 0..n {
            let lo = i.saturating_sub(w);
            let hi = (i + w).min(n - 1);
            let mut s = T::zero();
            for j in lo..=hi {
                s = s + self.get(i, j) * x[j];
            }
            for k in 0..m {
                s = s + self.col[i * m + k] * x[n + k];
            }
            y[i] = s;
        }
        for k in 0..m {
            let mut s = T::zero();
            for j in 0..n {
                s = s + self.row[k * n + j] * x[j];
            }
            for l in 0..m {
                s = s + self.corner[k * m + l] * x[n + l];
            }
            y[n + k] = s;
        }
        y
    }

    fn scale(&self) -> T {
        let f = |v: &Vec<T>| v.iter().fold(T::zero(), |a, b| a.max(b.abs()));
        f(&self.band).max(f(&self.col)).max(f(&self.row)).max(f(&self.corner))
    }

    pub fn factor(mut self) -> Result<BandLu<T>> {
        let (n, m, w) = (self.n, self.m, self.w);
        let tiny = self.scale() * T::epsilon() * T::from_count(n + m);
        let trailing = m.min(n);
        let split = n - trailing;
        let mut pivots = Vec::with_capacity(split);

        for k in 0..split {
            let last = (k + w).min(n - 1);
            let mut p = k;
            let mut best = self.band[self.slot(k, k)].abs();
            for i in k + 1..=last {
                let v = self.band[self.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tiny) {
                return Err(Error::SingularMatrix { row: k, pivot: best.to_f64_lossy() });
            }
            pivots.push(p);
            let right = (k + 2 * w).min(n - 1);
            if p != k {
                for j in k..=right {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.band.swap(a, b);
                }
                for c in 0..m {
                    self.col.swap(k * m + c, p * m + c);
                }
            }
            let pivot = self.band[self.slot(k, k)];
            for i in k + 1..=last {
                let si = self.slot(i, k);
                let l = self.band[si] / pivot;
                self.band[si] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=right {
                    let (a, b) = (self.slot(i, j), self.slot(k, j));
                    self.band[a] = self.band[a] - l * self.band[b];
                }
                for c in 0..m {
                    self.col[i * m + c] = self.col[i * m + c] - l * self.col[k * m + c];
                }
            }
            for r in 0..m {
                let l = self.row[r * n + k] / pivot;
                self.row[r * n + k] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=right {
                    self.row[r * n + j] = self.row[r * n + j] - l * self.band[self.slot(k, j)];
                }
                for c in 0..m {
                    self.corner[r * m + c] = self.corner[r * m + c] - l * self.col[k * m + c];
                }
            }
        }

        // Dense trailing block.
        let s = trailing + m;
        let mut dense = vec![T::zero(); s * s];
        for a in 0..s {
            for b in 0..s {
                dense[a * s + b] = match (a < trailing, b < trailing) {
                    (true, true) => self.get(split + a, split + b),
                    (true, false) => self.col[(split + a) * m + (b - trailing)],
                    (false, true) => self.row[(a - trailing) * n + split + b],
                    (false, false) => self.corner[(a - trailing) * m + (b - trailing)],
                };
            }
        }
        let mut dense_piv = Vec::with_capacity(s);
        for k in 0..s {
            let mut p = k;
            for i in k + 1..s {
                if dense[i * s + k].abs() > dense[p * s + k].abs() {
                    p = i;
                }
            }
            let best = dense[p * s + k].abs();
            if !(best > tiny) {
                return Err(Error::SingularMatrix { row: split + k, pivot: best.to_f64_lossy() });
            }
            dense_piv.push(p);
            if p != k {
                // Earlier multipliers stay in place; the solve applies each
                // interchange just before the matching elimination step.
                for j in k..s {
                    dense.swap(k * s + j, p * s + j);
                }
            }
            let pivot = dense[k * s + k];
            for i in k + 1..s {
                let l = dense[i * s + k] / pivot;
                dense[i * s + k] = l;
                for j in k + 1..s {
                    dense[i * s + j] = dense[i * s + j] - l * dense[k * s + j];
                }
            }
        }

        Ok(BandLu { a: self, split, pivots, dense, dense_piv })
    }
}

/// Factored [`BandMatrix`], reusable for many right-hand sides.
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    a: BandMatrix<T>,
    split: usize,
    pivots: Vec<usize>,
    dense: Vec<T>,
    dense_piv: Vec<usize>,
}

impl<T: Real> BandLu<T> {
    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let a = &self.a;
        let (n, m, w) = (a.n, a.m, a.w);
        assert_eq!(rhs.len(), n + m);
        let mut x = rhs.to_vec();
        let split = self.split;

        for k in 0..split {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != T::zero() {
                for i in k + 1..=(k + w).min(n - 1) {
                    x[i] = x[i] - a.band[a.slot(i, k)] * xk;
                }
                for r in 0..m {
                    x[n + r] = x[n + r] - a.row[r * n + k] * xk;
                }
            }
        }

        let s = self.dense_piv.len();
        let trailing = n - split;
        let mut y: Vec<T> = (0..s)
            .map(|i| if i < trailing { x[split + i] } else { x[n + i - trailing] })
            .collect();
        for k in 0..s {
            let p = self.dense_piv[k];
            if p != k {
                y.swap(k, p);
            }
            for i in k + 1..s {
                y[i] = y[i] - self.dense[i * s + k] * y[k];
            }
        }
        for k in (0..s).rev() {
            let mut v = y[k];
            for j in k + 1..s {
                v = v - self.dense[k * s + j] * y[j];
            }
            y[k] = v / self.dense[k * s + k];
        }
        for i in 0..s {
            if i < trailing {
                x[split + i] = y[i];
            } else {
                x[n + i - trailing] = y[i];
            }
        }

        for k in (0..split).rev() {
            let mut v = x[k];
            for j in k + 1..=(k + 2 * w).min(n - 1) {
                v = v - a.band[a.slot(k, j)] * x[j];
            }
            for r in 0..m {
                v = v - a.col[k * m + r] * x[n + r];
            }
            x[k] = v / a.band[a.slot(k, k)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, w: usize, m: usize, seed: u64) -> BandMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandMatrix::new(n, w, m);
        for i in 0..n {
            for j in i.saturating_sub(w)..=(i + w).min(n - 1) {
                a.add(i, j, rng.random_range(-1.0..1.0));
            }
        }
        for k in 0..m {
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            a.set_border_column(k, &c);
            a.set_border_row(k, &r);
            for l in 0..m {
                a.set_corner(k, l, rng.random_range(-1.0..1.0));
            }
        }
        a
    }

    fn check_solve(a: BandMatrix<f64>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..a.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = a.apply(&x);
        let lu = a.factor().unwrap();
        let y = lu.solve(&b);
        let err = x.iter().zip(&y).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
        assert!(err < 1e-8, "error {err}");
    }

    #[test]
    fn solves_random_banded_systems() {
        for (n, w, m) in [(1, 0, 0), (3, 1, 1), (4, 1, 1), (5, 1, 1), (4, 2, 1), (2, 1, 2), (3, 2, 2), (3, 1, 2), (7, 1, 0), (40, 3, 0), (40, 3, 1), (60, 5, 1), (8, 1, 2), (60, 5, 2), (12, 11, 1)] {
            check_solve(random_band(n, w, m, (n * 31 + w * 7 + m) as u64), 99);
        }
    }

    #[test]
    fn bordered_system_with_singular_core() {
        // 1D Neumann Laplacian is singular (constants); border with a row and
        // column that are not orthogonal to constants.
        let n = 30;
        let mut a = BandMatrix::new(n, 1, 1);
        for i in 0..n - 1 {
            a.add(i, i, 1.0);
            a.add(i + 1, i + 1, 1.0);
            a.add(i, i + 1, -1.0);
            a.add(i + 1, i, -1.0);
        }
        let ones = vec![1.0; n];
        a.set_border_column(0, &ones);
        a.set_border_row(0, &ones);
        check_solve(a, 5);
    }

    #[test]
    fn reports_singular_matrix() {
        let n = 10;
        let mut a = BandMatrix::<f64>::new(n, 1, 0);
        for i in 0..n - 1 {
            a.add(i, i, 1.0);
            a.add(i + 1, i + 1, 1.0);
            a.add(i, i + 1, -1.0);
            a.add(i + 1, i, -1.0);
        }
        assert!(matches!(a.factor(), Err(Error::SingularMatrix { .. })));
    }
}
