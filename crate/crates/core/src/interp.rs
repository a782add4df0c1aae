//! One-dimensional interpolants.

use crate::error::{invalid, Result};

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
/// It never overshoots the data, so nonnegative samples stay nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return invalid("interpolation needs at least two (x, y) pairs of equal length");
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("interpolation nodes must be strictly increasing");
        }
        if y.iter().chain(&x).any(|v| !v.is_finite()) {
            return invalid("interpolation data must be finite");
        }
        let k = x.len();
        let hs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..k - 1).map(|i| (y[i + 1] - y[i]) / hs[i]).collect();
        let mut d = vec![0.0; k];
        if k == 2 {
            d = vec![del[0]; 2];
        } else {
            for i in 1..k - 1 {
                if del[i - 1] * del[i] > 0.0 {
                    let w1 = 2.0 * hs[i] + hs[i - 1];
                    let w2 = hs[i] + 2.0 * hs[i - 1];
                    d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
                }
            }
            d[0] = end_slope(hs[0], hs[1], del[0], del[1]);
            d[k - 1] = end_slope(hs[k - 2], hs[k - 3], del[k - 2], del[k - 3]);
        }
        Ok(Pchip { x, y, d })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    /// Evaluates the interpolant, extending it by constants outside the nodes.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[k - 1] {
            return self.y[k - 1];
        }
        let i = self.x.partition_point(|&v| v <= t) - 1;
        hermite(self.x[i], self.x[i + 1], self.y[i], self.y[i + 1], self.d[i], self.d[i + 1], t)
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 <= 0.0 && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// Cubic Hermite interpolation on `[x0, x1]` from values and slopes.
#[inline]
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = x1 - x0;
    let s = (t - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * h * d1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes_and_lines() {
        let x = vec![0.0, 0.3, 1.0, 1.7, 2.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let p = Pchip::new(x.clone(), y.clone()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(p.eval(*a), *b);
        }
        assert!((p.eval(1.234) - (2.0 * 1.234 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn preserves_nonnegativity() {
        let x: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let y = vec![1.0, 0.9, 0.0, 0.0, 0.0, 0.5, 0.1, 0.0];
        let p = Pchip::new(x, y).unwrap();
        assert!((0..700).all(|k| p.eval(k as f64 * 0.01) >= 0.0));
    }

    #[test]
    fn rejects_unsorted_nodes() {
        assert!(Pchip::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }
}
