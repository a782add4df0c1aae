//! Euclidean projection onto the cone of nonnegative, coordinatewise
//! nondecreasing, discretely convex grid functions.
//!
//! Dykstra's algorithm specialised to half-spaces: every constraint
//! `a . u >= 0` carries its own correction `lambda >= 0`, and the iterate is
//! always `p + sum_k lambda_k a_k`. Keeping the corrections between calls
//! warm-starts the next projection.

use crate::grid::{convexity_directions, ScalarField};
use crate::par::Exec;

const COLORS: usize = 9;

/// One family of stencil constraints `sum_t coef[t] * u[base + offset[t]] >= 0`.
#[derive(Debug, Clone)]
struct Family {
    offsets: Vec<isize>,
    coefs: Vec<f64>,
    norm2: f64,
    /// Base node indices, grouped by color. Bases of one color touch
    /// disjoint nodes.
    bases: Vec<usize>,
    color_ranges: Vec<(usize, usize)>,
    lambda: Vec<f64>,
}

impl Family {
    fn new(n: usize, stencil: &[((isize, isize), f64)]) -> Self {
        let ni = n as isize;
        let lo_i = stencil.iter().map(|((di, _), _)| *di).min().unwrap();
        let hi_i = stencil.iter().map(|((di, _), _)| *di).max().unwrap();
        let lo_j = stencil.iter().map(|((_, dj), _)| *dj).min().unwrap();
        let hi_j = stencil.iter().map(|((_, dj), _)| *dj).max().unwrap();
        let mut by_color: Vec<Vec<usize>> = vec![Vec::new(); COLORS];
        for i in (-lo_i)..(ni - hi_i) {
            for j in (-lo_j)..(ni - hi_j) {
                let color = (i.rem_euclid(3) * 3 + j.rem_euclid(3)) as usize;
                by_color[color].push((i * ni + j) as usize);
            }
        }
        let mut bases = Vec::new();
        let mut color_ranges = Vec::with_capacity(COLORS);
        for group in by_color {
            let start = bases.len();
            bases.extend(group);
            color_ranges.push((start, bases.len()));
        }
        let offsets: Vec<isize> = stencil.iter().map(|((di, dj), _)| di * ni + dj).collect();
        let coefs: Vec<f64> = stencil.iter().map(|(_, c)| *c).collect();
        let norm2 = coefs.iter().map(|c| c * c).sum();
        let lambda = vec![0.0; bases.len()];
        Family { offsets, coefs, norm2, bases, color_ranges, lambda }
    }

    #[inline]
    fn slack(&self, u: &[f64], base: usize) -> f64 {
        let b = base as isize;
        self.offsets
            .iter()
            .zip(&self.coefs)
            .map(|(o, c)| c * u[(b + o) as usize])
            .sum()
    }

    fn min_slack(&self, u: &[f64]) -> f64 {
        self.bases.iter().map(|&b| self.slack(u, b)).fold(f64::INFINITY, f64::min)
    }

    /// One pass over the family; returns the largest change applied to `u`.
    fn sweep(&mut self, exec: Exec, u: &mut [f64]) -> f64 {
        let mut moved = 0.0f64;
        for c in 0..self.color_ranges.len() {
            let (start, end) = self.color_ranges[c];
            let bases = &self.bases[start..end];
            let lambda = &mut self.lambda[start..end];
            let (offsets, coefs, norm2) = (&self.offsets, &self.coefs, self.norm2);
            let uu: &[f64] = u;
            let deltas = exec.map(bases.len(), |k| {
                let b = bases[k] as isize;
                let s: f64 = offsets.iter().zip(coefs).map(|(o, c)| c * uu[(b + o) as usize]).sum();
                (-s / norm2).max(-lambda[k])
            });
            for ((&b, l), d) in bases.iter().zip(lambda.iter_mut()).zip(deltas) {
                if d != 0.0 {
                    *l += d;
                    let b = b as isize;
                    for (o, cf) in offsets.iter().zip(coefs) {
                        u[(b + o) as usize] += d * cf;
                    }
                    moved = moved.max(d.abs());
                }
            }
        }
        moved
    }

    /// Adds `A^T lambda` to `u`.
    fn add_correction(&self, u: &mut [f64]) {
        for (&b, &l) in self.bases.iter().zip(&self.lambda) {
            if l != 0.0 {
                let b = b as isize;
                for (o, c) in self.offsets.iter().zip(&self.coefs) {
                    u[(b + o) as usize] += l * c;
                }
            }
        }
    }
}

/// Outcome of one projection call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionStats {
    pub passes: usize,
    /// Largest violation `max(0, -a . u)` over all constraints at exit.
    pub violation: f64,
    pub converged: bool,
}

/// The constraint set together with its Dykstra corrections.
#[derive(Debug, Clone)]
pub struct FeasibleCone {
    n: usize,
    families: Vec<Family>,
}

impl FeasibleCone {
    pub fn new(n: usize, stencil_width: u8) -> Self {
        let mut families = vec![
            Family::new(n, &[((0, 0), 1.0)]),
            Family::new(n, &[((0, 0), -1.0), ((1, 0), 1.0)]),
            Family::new(n, &[((0, 0), -1.0), ((0, 1), 1.0)]),
        ];
        for (di, dj) in convexity_directions(stencil_width) {
            families.push(Family::new(n, &[((-di, -dj), 1.0), ((0, 0), -2.0), ((di, dj), 1.0)]));
        }
        FeasibleCone { n, families }
    }

    pub fn constraint_count(&self) -> usize {
        self.families.iter().map(|f| f.bases.len()).sum()
    }

    pub fn reset(&mut self) {
        for f in &mut self.families {
            f.lambda.iter_mut().for_each(|l| *l = 0.0);
        }
    }

    /// Largest constraint violation of `u` (zero when feasible).
    pub fn violation(&self, u: &[f64]) -> f64 {
        self.families
            .iter()
            .map(|f| f.min_slack(u))
            .fold(f64::INFINITY, f64::min)
            .min(0.0)
            .abs()
    }

    /// Projects `point` in place, starting from the stored corrections.
    /// Stops once a full pass moves no entry by more than `tol` and the
    /// violation is at most `tol`.
    pub fn project(&mut self, exec: Exec, point: &mut [f64], tol: f64, max_passes: usize) -> ProjectionStats {
        assert_eq!(point.len(), self.n * self.n);
        for f in &self.families {
            f.add_correction(point);
        }
        let mut passes = 0;
        let mut converged = false;
        while passes < max_passes {
            passes += 1;
            let mut moved = 0.0f64;
            for f in &mut self.families {
                moved = moved.max(f.sweep(exec, point));
            }
            if moved <= tol {
                converged = self.violation(point) <= tol;
                if converged {
                    break;
                }
            }
        }
        let violation = self.violation(point);
        ProjectionStats { passes, violation, converged: converged || violation <= tol && passes < max_passes }
    }
}

/// Is `u` feasible to within `tol`?
pub fn is_feasible(u: &ScalarField, stencil_width: u8, tol: f64) -> bool {
    FeasibleCone::new(u.n(), stencil_width).violation(&u.values) <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::directional_second_differences;
    use crate::params::ModelParams;

    fn params(n: usize) -> ModelParams {
        ModelParams::new(1.0, n, 1e-9).unwrap()
    }

    #[test]
    fn constraint_counts() {
        let n = 16;
        let cone = FeasibleCone::new(n, 1);
        let expected = n * n + 2 * n * (n - 1) + 2 * (n - 2) * n + 2 * (n - 2) * (n - 2);
        assert_eq!(cone.constraint_count(), expected);
    }

    #[test]
    fn colors_touch_disjoint_nodes() {
        let cone = FeasibleCone::new(20, 2);
        for f in &cone.families {
            for &(s, e) in &f.color_ranges {
                let mut seen = std::collections::HashSet::new();
                for &b in &f.bases[s..e] {
                    for o in &f.offsets {
                        assert!(seen.insert(b as isize + o));
                    }
                }
            }
        }
    }

    #[test]
    fn feasible_point_is_fixed() {
        let p = params(16);
        let u = ScalarField::from_fn(p, |x, y| 0.75 * ((x - 1.0).powi(2) + (y - 1.0).powi(2)) + 0.1 * (x + y));
        let mut v = u.values.clone();
        let mut cone = FeasibleCone::new(16, 2);
        let st = cone.project(Exec::default(), &mut v, 1e-13, 100);
        assert!(st.converged);
        assert!(u.values.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn negative_constant_projects_to_zero() {
        let mut v = vec![-1.0; 16 * 16];
        let mut cone = FeasibleCone::new(16, 1);
        let st = cone.project(Exec::default(), &mut v, 1e-12, 10_000);
        assert!(st.converged, "{st:?}");
        assert!(v.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn decreasing_affine_becomes_monotone() {
        let p = params(16);
        let u = ScalarField::from_fn(p, |x, _| 3.0 - x);
        let cfg = crate::direct::SolverConfig { kkt_tol: 1e-4, ..Default::default() };
        let w = crate::direct::project_feasible(&u, &cfg).unwrap();
        for i in 0..15 {
            for j in 0..16 {
                assert!(w.get(i + 1, j) - w.get(i, j) >= -1e-4);
            }
        }
        assert!(directional_second_differences(&w, 1).unwrap().iter().all(|d| d.min() >= -1e-4));
    }

    #[test]
    fn projection_is_nearest_point_among_feasible_samples() {
        // Variational inequality: <p - P(p), q - P(p)> <= 0 for feasible q.
        let p = params(16);
        let target = ScalarField::from_fn(p, |x, y| (3.0 * x).sin() + (2.0 * y).cos() - 0.5);
        let mut proj = target.values.clone();
        let mut cone = FeasibleCone::new(16, 1);
        assert!(cone.project(Exec::default(), &mut proj, 1e-12, 50_000).converged);
        let feasible = [
            ScalarField::zeros(p),
            ScalarField::from_fn(p, |x, y| (x + y - 2.0) * 0.3),
            ScalarField::from_fn(p, |x, y| (x - 1.0).powi(2) + (y - 1.0) * (x - 1.0) + (y - 1.0).powi(2)),
        ];
        for q in &feasible {
            let ip: f64 = (0..p.n * p.n)
                .map(|k| (target.values[k] - proj[k]) * (q.values[k] - proj[k]))
                .sum();
            assert!(ip <= 1e-8, "ip={ip}");
        }
    }

    #[test]
    fn warm_start_reaches_same_projection() {
        let p = params(16);
        let t1 = ScalarField::from_fn(p, |x, y| (x - 1.5) * (y - 1.2) - 0.1);
        let t2 = ScalarField::from_fn(p, |x, y| (x - 1.5) * (y - 1.2) - 0.09);
        let mut cone = FeasibleCone::new(16, 1);
        let mut a = t1.values.clone();
        cone.project(Exec::default(), &mut a, 1e-13, 50_000);
        let mut warm = t2.values.clone();
        cone.project(Exec::default(), &mut warm, 1e-13, 50_000);
        let mut cold = t2.values.clone();
        FeasibleCone::new(16, 1).project(Exec::default(), &mut cold, 1e-13, 50_000);
        assert!(warm.iter().zip(&cold).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}
