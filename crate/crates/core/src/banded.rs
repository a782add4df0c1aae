//! Banded direct solvers for the grid systems (natural ordering keeps the
//! bandwidth at a small multiple of the grid size).

use crate::error::{Error, Result};

/// Symmetric positive definite matrix in lower band storage:
/// `data[k * (bw + 1) + d] = M[k][k - d]`.
#[derive(Debug, Clone)]
pub struct SymBanded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBanded { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `v` to `M[r][c]` (and implicitly `M[c][r]`).
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let (hi, lo) = if r >= c { (r, c) } else { (c, r) };
        let d = hi - lo;
        debug_assert!(d <= self.bw);
        self.data[hi * (self.bw + 1) + d] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (hi, lo) = if r >= c { (r, c) } else { (c, r) };
        let d = hi - lo;
        if d > self.bw {
            0.0
        } else {
            self.data[hi * (self.bw + 1) + d]
        }
    }

    pub fn diag(&self, k: usize) -> f64 {
        self.data[k * (self.bw + 1)]
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let w = self.bw + 1;
        let mut y = vec![0.0; self.n];
        for k in 0..self.n {
            let row = &self.data[k * w..(k + 1) * w];
            y[k] += row[0] * x[k];
            for d in 1..w.min(k + 1) {
                let v = row[d];
                if v != 0.0 {
                    y[k] += v * x[k - d];
                    y[k - d] += v * x[k];
                }
            }
        }
        y
    }

    /// In-place Cholesky factorization `M = L L^T`. Pivots below
    /// `floor * max_diag` are replaced by that floor, which acts as a tiny
    /// regularization for the nearly singular systems met late in an
    /// interior-point run.
    pub fn cholesky(mut self, floor: f64) -> Result<CholeskyBanded> {
        let w = self.bw + 1;
        let n = self.n;
        let max_diag = (0..n).map(|k| self.data[k * w]).fold(0.0f64, f64::max);
        if !(max_diag > 0.0) || !max_diag.is_finite() {
            return Err(Error::SingularSystem("matrix has no positive diagonal".into()));
        }
        let tiny = floor * max_diag;
        for k in 0..n {
            let start = k.saturating_sub(self.bw);
            // Row k of L: L[k][j] for j in start..=k.
            for j in start..=k {
                let mut s = self.data[k * w + (k - j)];
                let lo = start.max(j.saturating_sub(self.bw));
                // s -= sum_{p=lo}^{j-1} L[k][p] L[j][p]
                let rk = k * w;
                let rj = j * w;
                for p in lo..j {
                    s -= self.data[rk + (k - p)] * self.data[rj + (j - p)];
                }
                if j == k {
                    let piv = if s > tiny { s } else { tiny.max(f64::MIN_POSITIVE) };
                    if !piv.is_finite() {
                        return Err(Error::SingularSystem(format!("non-finite pivot at row {k}")));
                    }
                    self.data[rk] = piv.sqrt();
                } else {
                    self.data[rk + (k - j)] = s / self.data[rj];
                }
            }
        }
        Ok(CholeskyBanded { m: self })
    }
}

#[derive(Debug, Clone)]
pub struct CholeskyBanded {
    m: SymBanded,
}

impl CholeskyBanded {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.m.n;
        let bw = self.m.bw;
        let w = bw + 1;
        let d = &self.m.data;
        let mut y = b.to_vec();
        for k in 0..n {
            let mut s = y[k];
            for p in k.saturating_sub(bw)..k {
                s -= d[k * w + (k - p)] * y[p];
            }
            y[k] = s / d[k * w];
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            for q in (k + 1)..(k + w).min(n) {
                s -= d[q * w + (q - k)] * y[q];
            }
            y[k] = s / d[k * w];
        }
        y
    }
}

/// General banded matrix with `lower` sub- and `upper` super-diagonals,
/// stored row-wise: `data[r * width + (c + lower - r)]`.
#[derive(Debug, Clone)]
pub struct Banded {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Banded { n, lower, upper, data: vec![0.0; n * (lower + upper + 1)] }
    }

    #[inline]
    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(c + self.lower >= r && c <= r + self.upper);
        let w = self.width();
        self.data[r * w + (c + self.lower - r)] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if c + self.lower < r || c > r + self.upper {
            0.0
        } else {
            self.data[r * self.width() + (c + self.lower - r)]
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let w = self.width();
        (0..self.n)
            .map(|r| {
                let c0 = r.saturating_sub(self.lower);
                let c1 = (r + self.upper + 1).min(self.n);
                (c0..c1).map(|c| self.data[r * w + (c + self.lower - r)] * x[c]).sum()
            })
            .collect()
    }

    /// LU factorization without pivoting. Intended for diagonally dominant
    /// systems (M-matrices from finite differences), where it is stable.
    pub fn lu(&self) -> Result<LuBanded> {
        let n = self.n;
        let (l, u) = (self.lower, self.upper);
        let w = self.width();
        let mut a = self.data.clone();
        for k in 0..n {
            let piv = a[k * w + l];
            if piv == 0.0 || !piv.is_finite() {
                return Err(Error::SingularSystem(format!("zero pivot at row {k}")));
            }
            let rmax = (k + l + 1).min(n);
            let cmax = (k + u + 1).min(n);
            for r in (k + 1)..rmax {
                let idx_rk = r * w + (k + l - r);
                let f = a[idx_rk] / piv;
                if f == 0.0 {
                    continue;
                }
                a[idx_rk] = f;
                for c in (k + 1)..cmax {
                    a[r * w + (c + l - r)] -= f * a[k * w + (c + l - k)];
                }
            }
        }
        Ok(LuBanded { n, lower: l, upper: u, data: a })
    }
}

#[derive(Debug, Clone)]
pub struct LuBanded {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl LuBanded {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, l, u) = (self.n, self.lower, self.upper);
        let w = l + u + 1;
        let a = &self.data;
        let mut y = b.to_vec();
        for r in 0..n {
            let mut s = y[r];
            for c in r.saturating_sub(l)..r {
                s -= a[r * w + (c + l - r)] * y[c];
            }
            y[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = y[r];
            for c in (r + 1)..(r + u + 1).min(n) {
                s -= a[r * w + (c + l - r)] * y[c];
            }
            y[r] = s / a[r * w + l];
        }
        y
    }
}
