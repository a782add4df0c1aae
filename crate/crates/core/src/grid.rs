//! Grid functions on the type square and their finite-difference operators.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{invalid, Error, Result};
use crate::par::{compensated_sum, Exec};
use crate::params::ModelParams;

/// Nodal values on the `n x n` grid; node `(i, j)` sits at
/// `(a + i h, a + j h)` and is stored at `i * n + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub params: ModelParams,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub params: ModelParams,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

/// Symmetric 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Eigenvalues in ascending order together with the unit eigenvector of
    /// the smaller one.
    pub fn eigen(&self) -> (f64, f64, [f64; 2]) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let rad = half_diff.hypot(self.xy);
        let lo = mean - rad;
        let hi = mean + rad;
        // (xy, lo - xx) and (lo - yy, xy) both span the kernel of (H - lo I);
        // take the better conditioned one.
        let v1 = [self.xy, lo - self.xx];
        let v2 = [lo - self.yy, self.xy];
        let n1 = v1[0].hypot(v1[1]);
        let n2 = v2[0].hypot(v2[1]);
        let v = if n1 == 0.0 && n2 == 0.0 {
            [1.0, 0.0]
        } else if n1 >= n2 {
            [v1[0] / n1, v1[1] / n1]
        } else {
            [v2[0] / n2, v2[1] / n2]
        };
        (lo, hi, v)
    }
}

impl ScalarField {
    pub fn zeros(params: ModelParams) -> Self {
        ScalarField { params, values: vec![0.0; params.n * params.n] }
    }

    pub fn from_fn(params: ModelParams, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Self {
        let n = params.n;
        let values = Exec::default().map(n * n, |k| f(params.coord(k / n), params.coord(k % n)));
        ScalarField { params, values }
    }

    pub fn from_values(params: ModelParams, values: Vec<f64>) -> Result<Self> {
        if values.len() != params.n * params.n {
            return invalid(format!("expected {} values, got {}", params.n * params.n, values.len()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite value at node {k}"));
        }
        Ok(ScalarField { params, values })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.params.n
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.params.n + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.params.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let n = self.params.n;
        self.values[i * n + j] = v;
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.params.coord(i), self.params.coord(j)]
    }

    /// Field reflected across the diagonal, `v(x1, x2) = u(x2, x1)`.
    pub fn transpose(&self) -> Self {
        let n = self.n();
        let values = (0..n * n).map(|k| self.values[(k % n) * n + k / n]).collect();
        ScalarField { params: self.params, values }
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &ScalarField, beta: f64) -> ScalarField {
        let values = self.values.iter().zip(&other.values).map(|(x, y)| alpha * x + beta * y).collect();
        ScalarField { params: self.params, values }
    }

    /// Bilinear interpolation; points outside the square are clamped onto it.
    pub fn interpolate(&self, x: [f64; 2]) -> f64 {
        let n = self.n();
        let h = self.params.h();
        let locate = |c: f64| {
            let s = ((c - self.params.a) / h).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            (i, s - i as f64)
        };
        let (i, fx) = locate(x[0]);
        let (j, fy) = locate(x[1]);
        let v00 = self.get(i, j);
        let v10 = self.get(i + 1, j);
        let v01 = self.get(i, j + 1);
        let v11 = self.get(i + 1, j + 1);
        (1.0 - fx) * ((1.0 - fy) * v00 + fy * v01) + fx * ((1.0 - fy) * v10 + fy * v11)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = String::with_capacity(self.values.len() * 72 + 16);
        buf.push_str("x1,x2,value\n");
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                let [x1, x2] = self.point(i, j);
                writeln!(buf, "{:.16e},{:.16e},{:.16e}", x1, x2, self.get(i, j)).unwrap();
            }
        }
        w.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Reads a field written by [`write_csv`](Self::write_csv); grid size and
    /// offset are inferred from the coordinates.
    pub fn read_csv<R: Read>(r: R, tol: f64) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("x1")) {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 columns", lineno + 1)));
            }
            let mut row = [0.0; 3];
            for (slot, c) in row.iter_mut().zip(&cols) {
                *slot = c
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            }
            rows.push(row);
        }
        let n = (rows.len() as f64).sqrt().round() as usize;
        if n * n != rows.len() || n < 2 {
            return Err(Error::Parse(format!("{} rows do not form a square grid", rows.len())));
        }
        let a = rows.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min);
        let params = ModelParams::new(a, n, tol)?;
        let h = params.h();
        let mut values = vec![f64::NAN; n * n];
        for r in &rows {
            let i = ((r[0] - a) / h).round();
            let j = ((r[1] - a) / h).round();
            if i < 0.0 || j < 0.0 || i >= n as f64 || j >= n as f64 {
                return Err(Error::Parse(format!("point ({}, {}) is off the grid", r[0], r[1])));
            }
            values[i as usize * n + j as usize] = r[2];
        }
        ScalarField::from_values(params, values)
    }
}

/// First derivative along one axis at index `i` of a line of `n` samples
/// obtained through `at`.
#[inline]
fn d1_line(at: impl Fn(usize) -> f64, i: usize, n: usize, h: f64) -> f64 {
    if i == 0 {
        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
    } else {
        (at(i + 1) - at(i - 1)) / (2.0 * h)
    }
}

#[inline]
fn d2_line(at: impl Fn(usize) -> f64, i: usize, n: usize, h: f64) -> f64 {
    let h2 = h * h;
    if i == 0 {
        (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2
    } else if i == n - 1 {
        (2.0 * at(n - 1) - 5.0 * at(n - 2) + 4.0 * at(n - 3) - at(n - 4)) / h2
    } else {
        (at(i - 1) - 2.0 * at(i) + at(i + 1)) / h2
    }
}

pub fn gradient(u: &ScalarField) -> VectorField {
    gradient_with(Exec::default(), u)
}

/// Centered differences inside, second-order one-sided differences on the edges.
pub fn gradient_with(exec: Exec, u: &ScalarField) -> VectorField {
    let n = u.n();
    assert!(n >= 3, "gradient needs at least 3 points per axis");
    let h = u.params.h();
    let v = &u.values;
    let d1 = exec.map(n * n, |k| {
        let (i, j) = (k / n, k % n);
        d1_line(|p| v[p * n + j], i, n, h)
    });
    let d2 = exec.map(n * n, |k| {
        let (i, j) = (k / n, k % n);
        d1_line(|q| v[i * n + q], j, n, h)
    });
    VectorField { params: u.params, d1, d2 }
}

pub fn hessian(u: &ScalarField) -> Vec<Sym2> {
    hessian_with(Exec::default(), u)
}

/// Per-node discrete Hessian. The mixed term applies the first-derivative
/// operator twice and averages both orders.
pub fn hessian_with(exec: Exec, u: &ScalarField) -> Vec<Sym2> {
    let n = u.n();
    assert!(n >= 5, "hessian needs at least 5 points per axis");
    let h = u.params.h();
    let g = gradient_with(exec, u);
    let (g1, g2) = (&g.d1, &g.d2);
    let v = &u.values;
    exec.map(n * n, |k| {
        let (i, j) = (k / n, k % n);
        let xx = d2_line(|p| v[p * n + j], i, n, h);
        let yy = d2_line(|q| v[i * n + q], j, n, h);
        let xy_a = d1_line(|q| g1[i * n + q], j, n, h);
        let xy_b = d1_line(|p| g2[p * n + j], i, n, h);
        Sym2 { xx, xy: 0.5 * (xy_a + xy_b), yy }
    })
}

/// Tensor-product trapezoid weights; they sum to one.
pub fn trapezoid_weights(n: usize) -> Vec<f64> {
    let h = 1.0 / (n as f64 - 1.0);
    (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
        .collect()
}

/// Trapezoid rule over the square with unit density, summed in fixed order
/// with compensation.
pub fn integrate(f: &ScalarField) -> f64 {
    let n = f.n();
    let w = trapezoid_weights(n);
    compensated_sum((0..n * n).map(|k| w[k / n] * w[k % n] * f.values[k]))
}

/// Second differences `u(x-d) - 2u(x) + u(x+d)` for one lattice direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalDifferences {
    pub dir: (isize, isize),
    /// Node indices where the stencil fits on the grid.
    pub centers: Vec<usize>,
    pub values: Vec<f64>,
}

impl DirectionalDifferences {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Lattice directions for the discrete convexity test: axes and diagonals,
/// plus knight moves when `width == 2`.
pub fn convexity_directions(width: u8) -> Vec<(isize, isize)> {
    let mut dirs = vec![(1, 0), (0, 1), (1, 1), (1, -1)];
    if width >= 2 {
        dirs.extend([(1, 2), (2, 1), (1, -2), (2, -1)]);
    }
    dirs
}

/// Centers `(i, j)` for which `(i, j) +- d` both lie on an `n x n` grid.
pub fn stencil_centers(n: usize, d: (isize, isize)) -> Vec<usize> {
    let (dx, dy) = (d.0.unsigned_abs(), d.1.unsigned_abs());
    let mut out = Vec::new();
    for i in dx..n.saturating_sub(dx) {
        for j in dy..n.saturating_sub(dy) {
            out.push(i * n + j);
        }
    }
    out
}

pub fn directional_second_differences(u: &ScalarField, stencil_width: u8) -> Result<Vec<DirectionalDifferences>> {
    if !(stencil_width == 1 || stencil_width == 2) {
        return invalid(format!("stencil width must be 1 or 2, got {stencil_width}"));
    }
    let n = u.n() as isize;
    Ok(convexity_directions(stencil_width)
        .into_iter()
        .map(|d| {
            let off = d.0 * n + d.1;
            let centers = stencil_centers(u.n(), d);
            let values = centers
                .iter()
                .map(|&c| {
                    let c = c as isize;
                    u.values[(c - off) as usize] - 2.0 * u.values[c as usize] + u.values[(c + off) as usize]
                })
                .collect();
            DirectionalDifferences { dir: d, centers, values }
        })
        .collect())
}
