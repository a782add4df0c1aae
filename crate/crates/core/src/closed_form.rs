//! Blunt-bunching profile `U(t)` along the anti-diagonal foliation and the
//! constants bounding the constant-strip ansatz.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Minimum distance from the logarithmic singularity at `t = 2a`.
pub const SINGULARITY_GUARD: f64 = 1e-12;

/// `sqrt(6) / 3`, the width of the ansatz strip above `2a`.
pub fn strip_width() -> f64 {
    6f64.sqrt() / 3.0
}

/// Exclusion level and ansatz upper bound `(t05, t15)` for any `a >= 0`.
///
/// At `a = 0` the two coincide.
pub fn strip_bounds(a: f64) -> (f64, f64) {
    let t05 = (4.0 * a + (4.0 * a * a + 6.0).sqrt()) / 3.0;
    (t05, 2.0 * a + strip_width())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BluntProfile {
    pub a: f64,
    pub t05: f64,
    pub c0: f64,
    pub t15_rc: f64,
}

/// Derivative order for [`BluntProfile::eval`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

impl Order {
    pub fn from_int(k: u8) -> Result<Self> {
        match k {
            0 => Ok(Order::Value),
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            _ => Err(Error::Validation(format!("derivative order must be 0, 1 or 2, got {k}"))),
        }
    }
}

pub fn make_blunt_profile(params: &ModelParams) -> BluntProfile {
    BluntProfile::new(params.a)
}

pub fn rc_strip_bounds(params: &ModelParams) -> (f64, f64) {
    strip_bounds(params.a)
}

impl BluntProfile {
    /// Profile for the square `[a, a+1]^2`; `t05` is the larger root of
    /// `3t^2 - 8at + 4a^2 - 2`, and `C0` makes `U(t05) = 0`.
    pub fn new(a: f64) -> Self {
        let (t05, t15_rc) = strip_bounds(a);
        let mut p = BluntProfile { a, t05, c0: 0.0, t15_rc };
        p.c0 = -p.raw(t05);
        p
    }

    fn raw(&self, t: f64) -> f64 {
        let a = self.a;
        0.375 * t * t - 0.5 * a * t - 0.5 * (t - 2.0 * a).abs().ln()
    }

    pub fn eval(&self, t: f64, order: Order) -> Result<f64> {
        let d = t - 2.0 * self.a;
        if !(d.abs() >= SINGULARITY_GUARD) {
            return Err(Error::Singularity(format!(
                "U evaluated at t = {t}, within {SINGULARITY_GUARD:e} of 2a = {}",
                2.0 * self.a
            )));
        }
        Ok(match order {
            Order::Value => self.raw(t) + self.c0,
            Order::First => 0.75 * t - 0.5 * self.a - 0.5 / d,
            Order::Second => 0.75 + 0.5 / (d * d),
        })
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        self.eval(t, Order::Value)
    }

    pub fn slope(&self, t: f64) -> Result<f64> {
        self.eval(t, Order::First)
    }

    pub fn curvature(&self, t: f64) -> Result<f64> {
        self.eval(t, Order::Second)
    }

    /// `U` continued by zero below the exclusion level, as used when a
    /// field is built on the whole square.
    pub fn clipped(&self, t: f64) -> f64 {
        if t <= self.t05 {
            0.0
        } else {
            self.raw(t) + self.c0
        }
    }

    /// Derivative of [`clipped`](Self::clipped).
    pub fn clipped_slope(&self, t: f64) -> f64 {
        if t <= self.t05 {
            0.0
        } else {
            0.75 * t - 0.5 * self.a - 0.5 / (t - 2.0 * self.a)
        }
    }

    /// Residual of the defining quadratic at `t05`.
    pub fn quadratic_residual(&self) -> f64 {
        let (a, t) = (self.a, self.t05);
        3.0 * t * t - 8.0 * a * t + 4.0 * a * a - 2.0
    }

    /// Rows `(t, U, U', U'')` on `count` evenly spaced levels in `[t05, 2a + 2]`.
    pub fn table(&self, count: usize) -> Vec<[f64; 4]> {
        let hi = 2.0 * self.a + 2.0;
        let count = count.max(2);
        (0..count)
            .map(|k| {
                let t = self.t05 + (hi - self.t05) * k as f64 / (count - 1) as f64;
                let d = t - 2.0 * self.a;
                [
                    t,
                    self.raw(t) + self.c0,
                    0.75 * t - 0.5 * self.a - 0.5 / d,
                    0.75 + 0.5 / (d * d),
                ]
            })
            .collect()
    }

    /// Writes [`BluntProfile::table`] as `t,U,dU,d2U` rows.
    pub fn write_table_csv<W: Write>(&self, mut w: W, count: usize) -> Result<()> {
        writeln!(w, "t,U,dU,d2U")?;
        for r in self.table(count) {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", r[0], r[1], r[2], r[3])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mut flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if (fm < 0.0) == (flo < 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn t05_at_unit_offset() {
        let p = BluntProfile::new(1.0);
        assert!((p.t05 - (4.0 + 10f64.sqrt()) / 3.0).abs() < 1e-15);
        assert!((p.t05 - 2.387426).abs() < 1e-6);
    }

    #[test]
    fn matching_conditions_hold() {
        for a in [0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 17.0] {
            let p = BluntProfile::new(a);
            assert!(p.value(p.t05).unwrap().abs() < 1e-12, "a={a}");
            assert!(p.slope(p.t05).unwrap().abs() < 1e-12, "a={a}");
        }
    }

    #[test]
    fn t05_matches_bisection_root() {
        let a = 0.5;
        let p = BluntProfile::new(a);
        let root = bisect(2.0 * a + 1e-9, 2.0 * a + 2.0, |t| p.slope(t).unwrap());
        assert!((root - p.t05).abs() < 1e-10);
    }

    #[test]
    fn slope_at_strip_top_is_a() {
        for a in [0.25, 0.5, 1.0, 2.0, 5.0] {
            let p = BluntProfile::new(a);
            assert!((p.slope(2.0 * a + strip_width()).unwrap() - a).abs() < 1e-12);
        }
    }

    #[test]
    fn curvature_exceeds_three_quarters() {
        let p = BluntProfile::new(1.0);
        for k in 1..200 {
            let t = 2.0 + k as f64 * 0.01;
            assert!(p.curvature(t).unwrap() > 0.75);
        }
    }

    #[test]
    fn singular_point_is_rejected() {
        let p = BluntProfile::new(1.0);
        assert!(matches!(p.value(2.0), Err(Error::Singularity(_))));
        assert!(matches!(p.slope(2.0 + 1e-14), Err(Error::Singularity(_))));
        assert!(p.value(2.0 + 1e-6).is_ok());
    }

    #[test]
    fn strip_bounds_values() {
        let (t05, t15) = strip_bounds(1.0);
        assert!((t05 - 2.387426).abs() < 1e-6);
        assert!((t15 - 2.816497).abs() < 1e-6);
        for a in [0.25, 1.0, 3.0] {
            assert!((strip_bounds(a).1 - 2.0 * a - strip_width()).abs() < 1e-14);
        }
        let (lo, hi) = strip_bounds(0.0);
        assert!((lo - hi).abs() < 1e-15);
        assert!((lo - strip_width()).abs() < 1e-15);
    }

    #[test]
    fn clipped_is_zero_below_exclusion() {
        let p = BluntProfile::new(1.0);
        assert_eq!(p.clipped(2.1), 0.0);
        assert_eq!(p.clipped_slope(p.t05), 0.0);
        assert!(p.clipped(2.6) > 0.0);
    }

    #[test]
    fn order_parsing() {
        assert_eq!(Order::from_int(2).unwrap(), Order::Second);
        assert!(Order::from_int(3).is_err());
    }
}
