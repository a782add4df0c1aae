use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Model data: the type square is `[a, a+1]^2`, sampled on an `n x n` grid.
///
/// The cost `|y|^2 / 2` and the uniform type density are fixed by the model
/// and are not parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a: f64,
    pub n: usize,
    pub tol: f64,
}

impl ModelParams {
    pub const MIN_N: usize = 16;

    pub fn new(a: f64, n: usize, tol: f64) -> Result<Self> {
        let p = ModelParams { a, n, tol };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return invalid(format!("a must be positive, got {}", self.a));
        }
        if self.n < Self::MIN_N {
            return invalid(format!("n must be at least {}, got {}", Self::MIN_N, self.n));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return invalid(format!("tol must be positive, got {}", self.tol));
        }
        Ok(())
    }

    /// Grid spacing `1 / (n - 1)`.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / (self.n as f64 - 1.0)
    }

    /// Coordinate of grid line `i`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.a + i as f64 * self.h()
    }
}
