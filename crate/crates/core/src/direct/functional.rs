//! Discrete profit functional.
//!
//! Each grid cell is split along its `(1, 1)` diagonal into two right
//! triangles, which keeps the discretization symmetric under `x1 <-> x2`.
//! On every triangle `u` is affine, so the integrand
//! `x . Du - u - |Du|^2 / 2` is integrated exactly. Central differences would
//! leave the checkerboard mode out of the quadratic term and let the
//! maximizer oscillate.

use crate::grid::ScalarField;
use crate::par::{compensated_sum, Exec};

/// Per-cell data of the two triangles: `[g1, g2]` for the lower triangle
/// `(i,j), (i+1,j), (i+1,j+1)` and the upper triangle `(i,j), (i,j+1), (i+1,j+1)`.
#[inline]
fn cell_gradients(v: &[f64], n: usize, i: usize, j: usize, h: f64) -> ([f64; 2], [f64; 2]) {
    let u00 = v[i * n + j];
    let u10 = v[(i + 1) * n + j];
    let u01 = v[i * n + j + 1];
    let u11 = v[(i + 1) * n + j + 1];
    ([(u10 - u00) / h, (u11 - u10) / h], [(u11 - u01) / h, (u01 - u00) / h])
}

pub fn evaluate_phi(u: &ScalarField) -> f64 {
    evaluate_phi_with(Exec::default(), u)
}

/// `Phi[u] = int (x . Du - u - |Du|^2 / 2) dx` for the piecewise-affine
/// interpolant of `u`.
pub fn evaluate_phi_with(exec: Exec, u: &ScalarField) -> f64 {
    let n = u.n();
    let h = u.params.h();
    let a = u.params.a;
    let v = &u.values;
    let m = n - 1;
    let area = 0.5 * h * h;
    let cells = exec.map(m * m, |c| {
        let (i, j) = (c / m, c % m);
        let (gl, gu) = cell_gradients(v, n, i, j, h);
        let x0 = a + i as f64 * h;
        let y0 = a + j as f64 * h;
        let u00 = v[i * n + j];
        let u10 = v[(i + 1) * n + j];
        let u01 = v[i * n + j + 1];
        let u11 = v[(i + 1) * n + j + 1];
        let lower = (x0 + 2.0 * h / 3.0) * gl[0] + (y0 + h / 3.0) * gl[1]
            - (u00 + u10 + u11) / 3.0
            - 0.5 * (gl[0] * gl[0] + gl[1] * gl[1]);
        let upper = (x0 + h / 3.0) * gu[0] + (y0 + 2.0 * h / 3.0) * gu[1]
            - (u00 + u01 + u11) / 3.0
            - 0.5 * (gu[0] * gu[0] + gu[1] * gu[1]);
        area * (lower + upper)
    });
    compensated_sum(cells)
}

pub fn phi_gradient(u: &ScalarField) -> ScalarField {
    phi_gradient_with(Exec::default(), u)
}

/// Exact gradient of [`evaluate_phi`] with respect to the nodal values.
pub fn phi_gradient_with(exec: Exec, u: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(u.params);
    phi_gradient_into(exec, u, &mut out.values);
    out
}

pub(crate) fn phi_gradient_into(exec: Exec, u: &ScalarField, out: &mut [f64]) {
    let n = u.n();
    let h = u.params.h();
    let a = u.params.a;
    let v = &u.values;
    let m = n - 1;
    // q = (h / 2) (centroid - g) per triangle component.
    let q: Vec<[f64; 4]> = exec.map(m * m, |c| {
        let (i, j) = (c / m, c % m);
        let (gl, gu) = cell_gradients(v, n, i, j, h);
        let x0 = a + i as f64 * h;
        let y0 = a + j as f64 * h;
        [
            0.5 * h * (x0 + 2.0 * h / 3.0 - gl[0]),
            0.5 * h * (y0 + h / 3.0 - gl[1]),
            0.5 * h * (x0 + h / 3.0 - gu[0]),
            0.5 * h * (y0 + 2.0 * h / 3.0 - gu[1]),
        ]
    });
    let tri_mass = h * h / 6.0;
    exec.fill(out, |k| {
        let (i, j) = (k / n, k % n);
        let mut g = 0.0;
        let mut tris = 0u32;
        if i < m && j < m {
            let [l1, _, _, u2] = q[i * m + j];
            g += -l1 - u2;
            tris += 2;
        }
        if i > 0 && j < m {
            let [l1, l2, _, _] = q[(i - 1) * m + j];
            g += l1 - l2;
            tris += 1;
        }
        if i > 0 && j > 0 {
            let [_, l2, u1, _] = q[(i - 1) * m + j - 1];
            g += l2 + u1;
            tris += 2;
        }
        if i < m && j > 0 {
            let [_, _, u1, u2] = q[i * m + j - 1];
            g += -u1 + u2;
            tris += 1;
        }
        g - tri_mass * tris as f64
    });
}

/// Largest eigenvalue of the (negated) Hessian of `Phi`, by power iteration.
pub fn lipschitz_estimate(u: &ScalarField, iters: usize) -> f64 {
    let zero = ScalarField::zeros(u.params);
    let offset = phi_gradient(&zero);
    let n2 = u.values.len();
    // Deterministic start vector with a checkerboard component.
    let mut v = ScalarField::from_values(
        u.params,
        (0..n2).map(|k| 1.0 + (((k / u.n()) + (k % u.n())) % 2) as f64 + (k as f64 * 0.37).sin()).collect(),
    )
    .expect("finite start vector");
    let mut lambda = 0.0;
    for _ in 0..iters {
        let norm = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.values.iter_mut().for_each(|x| *x /= norm);
        let g = phi_gradient(&v);
        let kv: Vec<f64> = g.values.iter().zip(&offset.values).map(|(g, c)| c - g).collect();
        lambda = kv.iter().zip(&v.values).map(|(a, b)| a * b).sum::<f64>();
        v.values = kv;
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;

    fn params(n: usize) -> ModelParams {
        ModelParams::new(1.0, n, 1e-9).unwrap()
    }

    /// Independent oracle: midpoint-refined quadrature of the integrand for a
    /// smooth `u` with analytic gradient.
    fn phi_oracle(a: f64, u: impl Fn(f64, f64) -> f64, du: impl Fn(f64, f64) -> (f64, f64), m: usize) -> f64 {
        let h = 1.0 / m as f64;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = a + (i as f64 + 0.5) * h;
                let y = a + (j as f64 + 0.5) * h;
                let (g1, g2) = du(x, y);
                s += (x * g1 + y * g2 - u(x, y) - 0.5 * (g1 * g1 + g2 * g2)) * h * h;
            }
        }
        s
    }

    #[test]
    fn zero_field_has_zero_profit() {
        assert_eq!(evaluate_phi(&ScalarField::zeros(params(17))), 0.0);
    }

    #[test]
    fn affine_field_matches_hand_integral() {
        for a in [0.5, 1.0, 2.0] {
            let p = ModelParams::new(a, 21, 1e-9).unwrap();
            let u = ScalarField::from_fn(p, |x, y| (x - a) + (y - a));
            let oracle = phi_oracle(a, |x, y| (x - a) + (y - a), |_, _| (1.0, 1.0), 200);
            let phi = evaluate_phi(&u);
            assert!((phi - (2.0 * a - 1.0)).abs() < 1e-12, "a={a} phi={phi}");
            assert!((oracle - (2.0 * a - 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_trial_converges_to_oracle() {
        let f = |x: f64, y: f64| 0.375 * (x + y).powi(2) * 0.1;
        let df = |x: f64, y: f64| (0.075 * (x + y), 0.075 * (x + y));
        let oracle = phi_oracle(1.0, f, df, 2000);
        let e1 = (evaluate_phi(&ScalarField::from_fn(params(17), f)) - oracle).abs();
        let e2 = (evaluate_phi(&ScalarField::from_fn(params(33), f)) - oracle).abs();
        assert!(e2 < 1e-4 && e1 / e2 > 3.0, "e1={e1} e2={e2}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = params(16);
        let u = ScalarField::from_fn(p, |x, y| (x * 1.7).sin() * y + 0.3 * x * x);
        let g = phi_gradient(&u);
        let mut seed = 12345u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..20 {
            let dir = ScalarField::from_values(p, (0..p.n * p.n).map(|_| rnd()).collect()).unwrap();
            let eps = 1e-4;
            let fd = (evaluate_phi(&u.combine(1.0, &dir, eps)) - evaluate_phi(&u.combine(1.0, &dir, -eps))) / (2.0 * eps);
            let ip: f64 = g.values.iter().zip(&dir.values).map(|(a, b)| a * b).sum();
            assert!((fd - ip).abs() < 1e-6, "fd={fd} ip={ip}");
        }
    }

    #[test]
    fn gradient_at_zero_is_linear_term() {
        let p = params(16);
        let g = phi_gradient(&ScalarField::zeros(p));
        let h = p.h();
        let (i, j) = (7, 9);
        // Interior node: the x . Du contributions telescope to -(area of its
        // support) = -h^2 times the divergence of x, which is 2; plus the -u
        // term weight h^2.
        let expected = -h * h - 2.0 * h * h;
        assert!((g.get(i, j) - expected).abs() < 1e-14, "{} vs {expected}", g.get(i, j));
    }

    #[test]
    fn gradient_is_affine() {
        let p = params(16);
        let u = ScalarField::from_fn(p, |x, y| x * y);
        let v = ScalarField::from_fn(p, |x, y| (x - y).exp());
        let g0 = phi_gradient(&ScalarField::zeros(p));
        let gu = phi_gradient(&u);
        let gv = phi_gradient(&v);
        let guv = phi_gradient(&u.combine(2.0, &v, -3.0));
        for k in 0..p.n * p.n {
            let lin = g0.values[k] + 2.0 * (gu.values[k] - g0.values[k]) - 3.0 * (gv.values[k] - g0.values[k]);
            assert!((guv.values[k] - lin).abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_bound_of_five_point_laplacian() {
        let l = lipschitz_estimate(&ScalarField::zeros(params(24)), 300);
        assert!(l > 7.0 && l < 8.0, "L={l}");
    }

    #[test]
    fn schedules_agree_bitwise() {
        let u = ScalarField::from_fn(params(33), |x, y| (x * y).sin());
        assert_eq!(evaluate_phi_with(Exec::Sequential, &u), evaluate_phi_with(Exec::Parallel, &u));
        assert_eq!(phi_gradient_with(Exec::Sequential, &u), phi_gradient_with(Exec::Parallel, &u));
    }
}
