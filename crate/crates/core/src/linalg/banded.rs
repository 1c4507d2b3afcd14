//! Banded direct solvers: general LU with partial pivoting and symmetric
//! positive definite Cholesky.

use crate::error::{Result, RomError};

/// General band matrix assembled entry by entry.
///
/// Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl` columns on
/// the right hold fill-in produced by row interchanges.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    /// Adds `value` at (i, j); the entry must lie inside the declared band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.kl + self.ku {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let threshold = 1e-14 * self.max_abs();
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut pmax = self.data[self.slot(k, k)].abs();
            for r in (k + 1)..=last_row {
                let v = self.data[self.slot(r, k)].abs();
                if v > pmax {
                    p = r;
                    pmax = v;
                }
            }
            if !(pmax > threshold) {
                return Err(RomError::Numerical(format!(
                    "singular band matrix: pivot {pmax:.3e} at row {k}"
                )));
            }
            piv[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for r in (k + 1)..=last_row {
                let s = self.slot(r, k);
                let l = self.data[s] / pivot;
                self.data[s] = l;
                if l != 0.0 {
                    for j in (k + 1)..=last_col {
                        let kj = self.data[self.slot(k, j)];
                        let rj = self.slot(r, j);
                        self.data[rj] -= l * kj;
                    }
                }
            }
        }
        Ok(BandLu { band: self, piv })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    band: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn n(&self) -> usize {
        self.band.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let a = &self.band;
        let n = a.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            if xk != 0.0 {
                for r in (k + 1)..=(k + a.kl).min(n - 1) {
                    x[r] -= a.data[a.slot(r, k)] * xk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..=(i + a.kl + a.ku).min(n - 1) {
                s -= a.data[a.slot(i, j)] * x[j];
            }
            x[i] = s / a.data[a.slot(i, i)];
        }
        x
    }
}

/// Symmetric band matrix storing the lower triangle: row `i` holds columns
/// `i - bw ..= i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymBandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // requires j <= i, i - j <= bw
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Adds `value` to (i, j) and, implicitly, (j, i).
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        assert!(i - j <= self.bw, "entry ({i},{j}) outside bandwidth {}", self.bw);
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// self += alpha * other (same shape).
    pub fn axpy(&mut self, alpha: f64, other: &SymBandMatrix) {
        assert!(self.n == other.n && self.bw == other.bw, "band shapes differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0; self.n];
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                let a = self.data[self.slot(i, j)].abs();
                rows[i] += a;
                if j != i {
                    rows[j] += a;
                }
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Cholesky factorization; fails when the matrix is not positive definite.
    pub fn cholesky(&self) -> Result<SymBandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let mut l = self.data.clone();
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = l[self.slot(j, j)];
            for k in lo..j {
                let v = l[self.slot(j, k)];
                d -= v * v;
            }
            if !(d > 0.0) {
                return Err(RomError::Problem(format!(
                    "matrix is not positive definite (pivot {d:.3e} at row {j})"
                )));
            }
            let d = d.sqrt();
            let jj = self.slot(j, j);
            l[jj] = d;
            for i in (j + 1)..=(j + bw).min(n - 1) {
                let lo_i = i.saturating_sub(bw).max(lo);
                let mut s = l[self.slot(i, j)];
                for k in lo_i..j {
                    s -= l[self.slot(i, k)] * l[self.slot(j, k)];
                }
                let ij = self.slot(i, j);
                l[ij] = s / d;
            }
        }
        Ok(SymBandCholesky { n, bw, l })
    }
}

#[derive(Clone, Debug)]
pub struct SymBandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl SymBandCholesky {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + (self.bw + j - i)]
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(self.bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.at(i, k) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..=(i + self.bw).min(n - 1) {
                s -= self.at(k, i) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        y
    }
}
