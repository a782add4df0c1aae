//! The fan of targeted-bunching segments above the diagonal.
//!
//! Segment `theta` starts on the left edge at `(a, h(theta))`, points along
//! `(cos theta, sin theta)`, has length `R(theta)`, and carries the affine
//! profile `u = m(theta) r + b(theta)`. The slope `m` solves
//!
//! ```text
//! m'' = 2R + (3/2) R^2 cos(theta) / D - m,   D = m' sin(theta) - m cos(theta) + a,
//! ```
//!
//! with `h' = R^2 / (2D)` and `b' = (m' cos(theta) + m sin(theta)) h'`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::closed_form::BluntProfile;
use crate::error::{invalid, Error, Result};
use crate::interp::{hermite, Pchip};
use crate::params::ModelParams;

pub const THETA_START: f64 = -FRAC_PI_4;
pub const THETA_END: f64 = FRAC_PI_2;

/// Tolerance on the sup-norm change between successive step halvings.
const HALVING_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 14;
/// Smallest admissible `|D|`.
const DENOMINATOR_GUARD: f64 = 1e-8;

/// Segment lengths `R(theta)` on `[-pi/4, pi/2]`.
#[derive(Clone)]
pub enum RadialProfile {
    /// Samples joined by a monotone cubic.
    Sampled(Pchip),
    Analytic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RadialProfile::Sampled(p) => f.debug_tuple("Sampled").field(&p.values()).finish(),
            RadialProfile::Analytic(_) => f.write_str("Analytic(..)"),
        }
    }
}

impl RadialProfile {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            RadialProfile::Sampled(p) => p.eval(theta),
            RadialProfile::Analytic(f) => f(theta),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BunchInput {
    pub t10: f64,
    pub r: RadialProfile,
    /// Shorten segments that would cross the diagonal so that they end on
    /// it; the upper and mirrored lower fans then meet along the diagonal.
    pub clip_to_diagonal: bool,
}

impl BunchInput {
    /// `R` from samples at increasing angles starting at `-pi/4`.
    pub fn from_samples(params: &ModelParams, t10: f64, theta: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        if theta.first().is_none_or(|t| (t - THETA_START).abs() > 1e-12) {
            return invalid("R samples must start at theta = -pi/4");
        }
        if theta.last().is_none_or(|t| *t > THETA_END + 1e-12) {
            return invalid("R samples must end at or before theta = pi/2");
        }
        if r.iter().any(|v| !(*v >= 0.0 && *v < SQRT_2)) {
            return invalid("R samples must lie in [0, sqrt 2)");
        }
        let input = BunchInput { t10, r: RadialProfile::Sampled(Pchip::new(theta, r)?), clip_to_diagonal: false };
        input.validate(params)?;
        Ok(input)
    }

    pub fn from_fn(params: &ModelParams, t10: f64, r: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let input = BunchInput { t10, r: RadialProfile::Analytic(Arc::new(r)), clip_to_diagonal: false };
        input.validate(params)?;
        Ok(input)
    }

    /// Turns on [`clip_to_diagonal`](Self::clip_to_diagonal).
    pub fn clipped_to_diagonal(mut self) -> Self {
        self.clip_to_diagonal = true;
        self
    }

    /// `R(-pi/4)` forced by the blunt strip ending at `t10`.
    pub fn initial_length(a: f64, t10: f64) -> f64 {
        (t10 - 2.0 * a) / SQRT_2
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let a = params.a;
        if !(self.t10 >= 2.0 * a && self.t10 <= 2.0 * a + 1.0) {
            return invalid(format!("t10 = {} outside [2a, 2a+1]", self.t10));
        }
        let r0 = self.r.eval(THETA_START);
        let want = Self::initial_length(a, self.t10);
        if (r0 - want).abs() > 1e-10 {
            return invalid(format!("R(-pi/4) = {r0} but (t10 - 2a)/sqrt 2 = {want}"));
        }
        Ok(())
    }

    /// End of the positivity interval of `R` that starts at `-pi/4`.
    pub fn positivity_end(&self) -> f64 {
        let scan = 2048;
        let dt = (THETA_END - THETA_START) / scan as f64;
        let mut prev = THETA_START;
        for k in 1..=scan {
            let th = THETA_START + k as f64 * dt;
            if self.r.eval(th) <= 0.0 {
                let (mut lo, mut hi) = (prev, th);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if self.r.eval(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return hi;
            }
            prev = th;
        }
        THETA_END
    }
}

/// Fan sampled at the Runge–Kutta nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FanSolution {
    pub a: f64,
    pub t10: f64,
    pub theta: Vec<f64>,
    pub m: Vec<f64>,
    pub m_prime: Vec<f64>,
    pub m_second: Vec<f64>,
    pub h: Vec<f64>,
    pub h_prime: Vec<f64>,
    pub b: Vec<f64>,
    pub b_prime: Vec<f64>,
    pub r: Vec<f64>,
    /// Final step size after halving.
    pub step: f64,
}

type State = [f64; 4];

struct Rhs<'a> {
    a: f64,
    input: &'a BunchInput,
    /// Sign of `D` at the start; `D` may not reach zero.
    sign: f64,
}

impl Rhs<'_> {
    /// Derivatives of `(m, m', h, b)` plus the value of `R`.
    fn eval(&self, th: f64, y: &State) -> Result<(State, f64)> {
        let [m, mp, h, _] = *y;
        let (s, c) = th.sin_cos();
        let mut r = self.input.r.eval(th).max(0.0);
        if self.input.clip_to_diagonal && c > s {
            r = r.min(((h - self.a) / (c - s)).max(0.0));
        }
        let d = mp * s - m * c + self.a;
        if d * self.sign < DENOMINATOR_GUARD || !d.is_finite() {
            return Err(Error::Singularity(format!("fan denominator vanishes at theta = {th:.6}")));
        }
        let mpp = 2.0 * r + 1.5 * r * r * c / d - m;
        let hp = r * r / (2.0 * d);
        let bp = (mp * c + m * s) * hp;
        Ok(([mp, mpp, hp, bp], r))
    }
}

/// RK4 trajectory; on failure returns the nodes reached so far together
/// with the error.
fn integrate_fixed(rhs: &Rhs, y0: State, th0: f64, th1: f64, steps: usize) -> (Vec<(f64, State)>, Option<Error>) {
    let dt = (th1 - th0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0;
    out.push((th0, y));
    for k in 0..steps {
        let th = th0 + k as f64 * dt;
        let add = |y: &State, k: &State, f: f64| -> State { [y[0] + f * k[0], y[1] + f * k[1], y[2] + f * k[2], y[3] + f * k[3]] };
        let stage = || -> Result<State> {
            let (k1, _) = rhs.eval(th, &y)?;
            let (k2, _) = rhs.eval(th + 0.5 * dt, &add(&y, &k1, 0.5 * dt))?;
            let (k3, _) = rhs.eval(th + 0.5 * dt, &add(&y, &k2, 0.5 * dt))?;
            let (k4, _) = rhs.eval(th + dt, &add(&y, &k3, dt))?;
            let mut next = y;
            for q in 0..4 {
                next[q] += dt / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence(format!("fan state became non-finite near theta = {th:.6}")));
            }
            Ok(next)
        };
        match stage() {
            Ok(next) => y = next,
            Err(e) => return (out, Some(e)),
        }
        // Land exactly on the end point.
        let th_next = if k + 1 == steps { th1 } else { th0 + (k + 1) as f64 * dt };
        out.push((th_next, y));
    }
    (out, None)
}

/// Initial data at `theta = -pi/4` taken from the blunt profile at `t10`.
fn initial_state(params: &ModelParams, t10: f64) -> Result<State> {
    let prof = BluntProfile::new(params.a);
    Ok([0.0, SQRT_2 * prof.slope(t10)?, t10 - params.a, prof.value(t10)?])
}

/// Fixed-step RK4 integration of the fan with the given step, without
/// halving; the step is shortened to divide the interval evenly.
pub fn integrate_fan(params: &ModelParams, input: &BunchInput, step: f64) -> Result<FanSolution> {
    match integrate_fan_partial(params, input, step)? {
        (fan, None) => Ok(fan),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`integrate_fan`], but a singular or diverging fan is returned up to
/// the last node reached, together with the error that stopped it.
pub fn integrate_fan_partial(params: &ModelParams, input: &BunchInput, step: f64) -> Result<(FanSolution, Option<Error>)> {
    params.validate()?;
    input.validate(params)?;
    if !(step > 0.0 && step.is_finite()) {
        return invalid(format!("step must be positive, got {step}"));
    }
    let r0 = BunchInput::initial_length(params.a, input.t10);
    if r0 <= 0.0 {
        return Ok((FanSolution::empty(params.a, input.t10, step), None));
    }
    let th1 = input.positivity_end();
    let steps = (((th1 - THETA_START) / step).ceil() as usize).max(1);
    let y0 = initial_state(params, input.t10)?;
    let d0 = -y0[1] * std::f64::consts::FRAC_1_SQRT_2 + params.a;
    let rhs = Rhs { a: params.a, input, sign: if d0 < 0.0 { -1.0 } else { 1.0 } };
    let (traj, mut err) = integrate_fixed(&rhs, y0, THETA_START, th1, steps);
    let mut fan = FanSolution::empty(params.a, input.t10, (th1 - THETA_START) / steps as f64);
    for (th, y) in traj {
        let (dy, r) = match rhs.eval(th, &y) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                break;
            }
        };
        fan.theta.push(th);
        fan.m.push(y[0]);
        fan.m_prime.push(y[1]);
        fan.m_second.push(dy[1]);
        fan.h.push(y[2]);
        fan.h_prime.push(dy[2]);
        fan.b.push(y[3]);
        fan.b_prime.push(dy[3]);
        fan.r.push(r);
    }
    Ok((fan, err))
}

/// Integrates the fan, halving `step` until two successive solutions agree
/// to `1e-8` in sup norm on the coarser nodes.
pub fn solve_fan(params: &ModelParams, input: &BunchInput, step: f64) -> Result<FanSolution> {
    let mut coarse = integrate_fan(params, input, step)?;
    if coarse.is_empty() {
        return Ok(coarse);
    }
    let mut step = step;
    for _ in 0..MAX_HALVINGS {
        step *= 0.5;
        let fine = integrate_fan(params, input, step)?;
        let diff = coarse.max_state_diff(&fine);
        coarse = fine;
        if diff < HALVING_TOL {
            return Ok(coarse);
        }
    }
    Err(Error::NonConvergence(format!(
        "fan integration did not settle to {HALVING_TOL:e} after {MAX_HALVINGS} step halvings"
    )))
}

impl FanSolution {
    fn empty(a: f64, t10: f64, step: f64) -> Self {
        FanSolution {
            a,
            t10,
            theta: vec![],
            m: vec![],
            m_prime: vec![],
            m_second: vec![],
            h: vec![],
            h_prime: vec![],
            b: vec![],
            b_prime: vec![],
            r: vec![],
            step,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    /// Keeps the first `len` nodes.
    pub fn truncate(&mut self, len: usize) {
        for v in [
            &mut self.theta,
            &mut self.m,
            &mut self.m_prime,
            &mut self.m_second,
            &mut self.h,
            &mut self.h_prime,
            &mut self.b,
            &mut self.b_prime,
            &mut self.r,
        ] {
            v.truncate(len);
        }
    }

    pub fn theta_max(&self) -> Option<f64> {
        self.theta.last().copied()
    }

    /// Largest difference of `(m, m', h, b)` at the nodes of `self`, assuming
    /// `fine` has twice as many steps on the same interval.
    fn max_state_diff(&self, fine: &FanSolution) -> f64 {
        let mut d = 0.0f64;
        for k in 0..self.len() {
            let q = 2 * k;
            if q >= fine.len() {
                return f64::INFINITY;
            }
            d = d
                .max((self.m[k] - fine.m[q]).abs())
                .max((self.m_prime[k] - fine.m_prime[q]).abs())
                .max((self.h[k] - fine.h[q]).abs())
                .max((self.b[k] - fine.b[q]).abs());
        }
        d
    }

    /// Left and right endpoints of segment `k`.
    pub fn segment(&self, k: usize) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.theta[k].sin_cos();
        let p = [self.a, self.h[k]];
        (p, [p[0] + self.r[k] * c, p[1] + self.r[k] * s])
    }

    fn interval(&self, th: f64) -> usize {
        let k = self.theta.partition_point(|&v| v <= th);
        k.clamp(1, self.len() - 1) - 1
    }

    /// Hermite interpolation of `(m, h, b)` at `th`.
    pub fn state_at(&self, th: f64) -> (f64, f64, f64) {
        if self.len() == 1 {
            return (self.m[0], self.h[0], self.b[0]);
        }
        let k = self.interval(th);
        let (t0, t1) = (self.theta[k], self.theta[k + 1]);
        let m = hermite(t0, t1, self.m[k], self.m[k + 1], self.m_prime[k], self.m_prime[k + 1], th);
        let h = hermite(t0, t1, self.h[k], self.h[k + 1], self.h_prime[k], self.h_prime[k + 1], th);
        let b = hermite(t0, t1, self.b[k], self.b[k + 1], self.b_prime[k], self.b_prime[k + 1], th);
        (m, h, b)
    }

    fn r_at(&self, th: f64) -> f64 {
        if self.len() == 1 {
            return self.r[0];
        }
        let k = self.interval(th);
        let w = (th - self.theta[k]) / (self.theta[k + 1] - self.theta[k]);
        (1.0 - w) * self.r[k] + w * self.r[k + 1]
    }

    fn cross_at(&self, x: [f64; 2], th: f64) -> f64 {
        let (_, h, _) = self.state_at(th);
        let (s, c) = th.sin_cos();
        (x[0] - self.a) * s - (x[1] - h) * c
    }

    /// Locates the segment through `x`: returns `(theta, r)`.
    pub fn locate(&self, x: [f64; 2]) -> Result<(f64, f64)> {
        if self.is_empty() {
            return Err(Error::NotInFan("the fan is empty".into()));
        }
        let len_tol = 1e-9;
        let check = |th: f64| -> Option<(f64, f64)> {
            let (_, h, _) = self.state_at(th);
            let (s, c) = th.sin_cos();
            let v = [x[0] - self.a, x[1] - h];
            let r = v[0] * c + v[1] * s;
            let rr = v[0].hypot(v[1]);
            if r >= -len_tol && rr <= self.r_at(th) + len_tol {
                Some((th, rr))
            } else {
                None
            }
        };
        let on_line = 1e-12;
        let mut prev = self.cross_at(x, self.theta[0]);
        if prev.abs() <= on_line {
            if let Some(hit) = check(self.theta[0]) {
                return Ok(hit);
            }
        }
        for k in 1..self.len() {
            let cur = self.cross_at(x, self.theta[k]);
            if cur.abs() <= on_line {
                if let Some(hit) = check(self.theta[k]) {
                    return Ok(hit);
                }
            } else if prev.abs() > on_line && (prev < 0.0) != (cur < 0.0) {
                let (mut lo, mut hi) = (self.theta[k - 1], self.theta[k]);
                let mut f_lo = prev;
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    let f_mid = self.cross_at(x, mid);
                    if f_mid == 0.0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if (f_mid < 0.0) == (f_lo < 0.0) {
                        lo = mid;
                        f_lo = f_mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-15 {
                        break;
                    }
                }
                if let Some(hit) = check(0.5 * (lo + hi)) {
                    return Ok(hit);
                }
            }
            prev = cur;
        }
        Err(Error::NotInFan(format!("no fan segment passes through ({:.6}, {:.6})", x[0], x[1])))
    }
}

/// Value of the targeted-bunching profile above the diagonal.
pub fn u1_minus_eval(fan: &FanSolution, x: [f64; 2]) -> Result<f64> {
    let (th, r) = fan.locate(x)?;
    let (m, _, b) = fan.state_at(th);
    Ok(m * r + b)
}

/// Value below the diagonal, by reflection across it.
pub fn u1_plus_eval(fan: &FanSolution, x: [f64; 2]) -> Result<f64> {
    u1_minus_eval(fan, [x[1], x[0]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FanDiagnostics {
    pub inside_square: bool,
    pub above_diagonal: bool,
    pub non_crossing: bool,
    pub monotone_h: bool,
    /// Largest distance of a segment point outside the square.
    pub max_outside: f64,
    /// Largest `x1 - x2` over segment points.
    pub max_below_diagonal: f64,
}

impl FanDiagnostics {
    pub fn all_pass(&self) -> bool {
        self.inside_square && self.above_diagonal && self.non_crossing && self.monotone_h
    }
}

pub fn validate_fan_geometry(fan: &FanSolution, params: &ModelParams) -> FanDiagnostics {
    let tol = 1e-9;
    let (lo, hi) = (params.a, params.a + 1.0);
    let mut max_outside = 0.0f64;
    let mut max_below = f64::NEG_INFINITY;
    let mut non_crossing = true;
    for k in 0..fan.len() {
        let (p, q) = fan.segment(k);
        // Both sets are convex, so checking the endpoints suffices.
        for z in [p, q] {
            for c in z {
                max_outside = max_outside.max(lo - c).max(c - hi);
            }
            max_below = max_below.max(z[0] - z[1]);
        }
        if k + 1 < fan.len() {
            let (p1, _) = fan.segment(k + 1);
            let (s, c) = fan.theta[k].sin_cos();
            let disp = [p1[0] - p[0], p1[1] - p[1]];
            if c * disp[1] - s * disp[0] < -tol {
                non_crossing = false;
            }
        }
    }
    // Also rule out crossings between segments a few nodes apart.
    let stride = (fan.len() / 64).max(1);
    let picks: Vec<usize> = (0..fan.len()).step_by(stride).collect();
    for w in picks.windows(2) {
        let (p0, q0) = fan.segment(w[0]);
        let (p1, q1) = fan.segment(w[1]);
        if segments_cross(p0, q0, p1, q1) {
            non_crossing = false;
        }
    }
    let monotone_h = fan.h.windows(2).all(|w| w[1] >= w[0] - tol);
    FanDiagnostics {
        inside_square: max_outside <= tol,
        above_diagonal: fan.is_empty() || max_below <= tol,
        non_crossing,
        monotone_h,
        max_outside,
        max_below_diagonal: if fan.is_empty() { 0.0 } else { max_below },
    }
}

/// Proper crossing of two segments (touching endpoints do not count).
pub(crate) fn segments_cross(p0: [f64; 2], q0: [f64; 2], p1: [f64; 2], q1: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let eps = 1e-14;
    let d1 = orient(p1, q1, p0);
    let d2 = orient(p1, q1, q0);
    let d3 = orient(p0, q0, p1);
    let d4 = orient(p0, q0, q1);
    ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps)) && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
}

impl FanSolution {
    /// Writes `theta,m,m_prime,h,b,R` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "theta,m,m_prime,h,b,R")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.theta[k], self.m[k], self.m_prime[k], self.h[k], self.b[k], self.r[k]
            )?;
        }
        Ok(())
    }

    /// Segment endpoints `(a, h) + R (cos, sin)` from the diagonal up to the
    /// left edge.
    pub fn outer_curve(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|k| self.segment(k).1).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(1.0, 64, 1e-9).unwrap()
    }

    fn smooth_input(t10: f64) -> BunchInput {
        let r0 = BunchInput::initial_length(1.0, t10);
        BunchInput::from_fn(&params(), t10, move |th| r0 * (1.0 - 0.3 * (th - THETA_START)).max(0.05)).unwrap()
    }

    #[test]
    fn initial_identities() {
        let fan = solve_fan(&params(), &smooth_input(2.45), 0.05).unwrap();
        let prof = BluntProfile::new(1.0);
        assert_eq!(fan.theta[0], THETA_START);
        assert_eq!(fan.m[0], 0.0);
        assert!((fan.h[0] - 1.45).abs() < 1e-12);
        assert!((fan.b[0] - prof.value(2.45).unwrap()).abs() < 1e-12);
        assert!((fan.m_prime[0] - SQRT_2 * prof.slope(2.45).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn initial_curvature_matches_ode() {
        let t10 = 2.45;
        let fan = solve_fan(&params(), &smooth_input(t10), 0.05).unwrap();
        let r0 = BunchInput::initial_length(1.0, t10);
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let want = 2.0 * r0 + 1.5 * r0 * r0 * c / (-c * fan.m_prime[0] + 1.0);
        assert!((fan.m_second[0] - want).abs() < 1e-12);
        // Second difference of the integrated m near the start.
        let dt = fan.theta[1] - fan.theta[0];
        let fd = (2.0 * fan.m[0] - 5.0 * fan.m[1] + 4.0 * fan.m[2] - fan.m[3]) / (dt * dt);
        assert!((fd - want).abs() < 1e-4, "fd={fd} want={want}");
    }

    #[test]
    fn empty_fan_when_strip_reaches_corner() {
        let input = BunchInput::from_fn(&params(), 2.0, |_| 0.0).unwrap();
        let fan = solve_fan(&params(), &input, 0.01).unwrap();
        assert!(fan.is_empty());
        assert!(validate_fan_geometry(&fan, &params()).all_pass());
    }

    #[test]
    fn stops_where_r_vanishes() {
        let t10 = 2.45;
        let r0 = BunchInput::initial_length(1.0, t10);
        let input = BunchInput::from_fn(&params(), t10, move |th| r0 * (1.0 - (th - THETA_START))).unwrap();
        let fan = solve_fan(&params(), &input, 0.02).unwrap();
        assert!((fan.theta_max().unwrap() - (THETA_START + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn rk4_order_is_four() {
        let input = smooth_input(2.45);
        let p = params();
        let base = 0.04;
        let err = |step: f64| {
            let a = integrate_fan(&p, &input, step).unwrap();
            let b = integrate_fan(&p, &input, step / 2.0).unwrap();
            a.max_state_diff(&b)
        };
        let (e1, e2) = (err(base), err(base / 2.0));
        let order = (e1 / e2).log2();
        assert!(order >= 3.5, "order {order}");
    }

    #[test]
    fn h_matches_quadrature_of_its_integrand() {
        let fan = solve_fan(&params(), &smooth_input(2.45), 0.02).unwrap();
        // Trapezoid on the stored integrand with Richardson-free fine sampling.
        let mut h = fan.h[0];
        for k in 1..fan.len() {
            let dt = fan.theta[k] - fan.theta[k - 1];
            h += 0.5 * dt * (fan.h_prime[k] + fan.h_prime[k - 1]) - dt * dt / 12.0 * (fan_hpp(&fan, k) - fan_hpp(&fan, k - 1));
        }
        assert!((h - fan.h[fan.len() - 1]).abs() < 1e-7);
    }

    // Derivative of h' by differencing neighbours (for the trapezoid end correction).
    fn fan_hpp(fan: &FanSolution, k: usize) -> f64 {
        let last = fan.len() - 1;
        let (lo, hi) = (k.saturating_sub(1), (k + 1).min(last));
        (fan.h_prime[hi] - fan.h_prime[lo]) / (fan.theta[hi] - fan.theta[lo])
    }

    #[test]
    fn values_along_segments_are_affine() {
        let fan = solve_fan(&params(), &smooth_input(2.45), 0.02).unwrap();
        let mut seed = 3u64;
        for _ in 0..100 {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let k = (seed >> 33) as usize % fan.len();
            let (p, q) = fan.segment(k);
            let up = u1_minus_eval(&fan, p).unwrap();
            let uq = u1_minus_eval(&fan, q).unwrap();
            assert!((up - fan.b[k]).abs() < 1e-9);
            assert!((uq - (fan.m[k] * fan.r[k] + fan.b[k])).abs() < 1e-9);
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let um = u1_minus_eval(&fan, mid).unwrap();
            assert!((um - 0.5 * (up + uq)).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn first_segment_is_a_level_set_of_the_blunt_profile() {
        let t10 = 2.45;
        let fan = solve_fan(&params(), &smooth_input(t10), 0.02).unwrap();
        let prof = BluntProfile::new(1.0);
        for w in [0.0, 0.25, 0.5, 0.9] {
            let x1 = 1.0 + w * (t10 / 2.0 - 1.0);
            let v = u1_minus_eval(&fan, [x1, t10 - x1]).unwrap();
            assert!((v - prof.value(t10).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn points_off_the_fan_are_rejected() {
        let fan = solve_fan(&params(), &smooth_input(2.45), 0.02).unwrap();
        assert!(matches!(u1_minus_eval(&fan, [1.99, 1.01]), Err(Error::NotInFan(_))));
    }

    #[test]
    fn escaping_fan_is_flagged() {
        let mut fan = solve_fan(&params(), &smooth_input(2.45), 0.05).unwrap();
        let last = fan.len() - 1;
        fan.h[last] = 2.3;
        let d = validate_fan_geometry(&fan, &params());
        assert!(!d.inside_square);
    }

    #[test]
    fn vanishing_denominator_is_reported() {
        let t10 = 2.6;
        let r0 = BunchInput::initial_length(1.0, t10);
        let input = BunchInput::from_fn(&params(), t10, move |_| r0).unwrap();
        assert!(matches!(solve_fan(&params(), &input, 0.01), Err(Error::Singularity(_))));
    }

    #[test]
    fn input_invariants_are_checked() {
        let p = params();
        assert!(BunchInput::from_fn(&p, 2.6, |_| 0.1).is_err());
        assert!(BunchInput::from_samples(&p, 2.6, vec![0.0, 1.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn diagonal_clip_keeps_segments_above_diagonal() {
        let t10 = 2.45;
        let input = BunchInput::from_fn(&params(), t10, |_| 0.6).unwrap_err();
        assert!(input.is_validation());
        let r0 = BunchInput::initial_length(1.0, t10);
        let input = BunchInput::from_fn(&params(), t10, move |th| if th <= THETA_START { r0 } else { 1.0 })
            .unwrap()
            .clipped_to_diagonal();
        let (fan, _) = integrate_fan_partial(&params(), &input, 0.01).unwrap();
        assert!(fan.len() > 3);
        for k in 0..fan.len() {
            let (_, q) = fan.segment(k);
            assert!(q[0] <= q[1] + 1e-12, "segment {k} ends below the diagonal");
        }
    }
}
