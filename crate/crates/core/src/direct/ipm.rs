//! Primal-dual interior-point method (Mehrotra predictor-corrector) for the
//! discrete profit maximization. Each Newton system
//! `(K + A^T diag(z/s) A) du = rhs` is banded under the natural node
//! ordering and is factored by banded Cholesky.

use crate::banded::SymBanded;
use crate::error::{Error, Result};
use crate::grid::convexity_directions;
use crate::params::ModelParams;

use super::functional;

/// Constraint rows `a . u >= 0` with at most three entries, scaled so that
/// `a . u` is a value, a first derivative, or a second derivative.
pub(crate) struct ConstraintRows {
    pub idx: Vec<[usize; 3]>,
    pub coef: Vec<[f64; 3]>,
    /// Largest `|k - l|` between two indices of a row.
    pub span: usize,
}

impl ConstraintRows {
    pub fn new(n: usize, stencil_width: u8) -> Self {
        let h = 1.0 / (n as f64 - 1.0);
        let mut idx = Vec::new();
        let mut coef = Vec::new();
        let ni = n as isize;
        let at = |i: isize, j: isize| (i * ni + j) as usize;
        for i in 0..ni {
            for j in 0..ni {
                idx.push([at(i, j); 3]);
                coef.push([1.0, 0.0, 0.0]);
            }
        }
        for i in 0..ni {
            for j in 0..ni {
                if i + 1 < ni {
                    idx.push([at(i, j), at(i + 1, j), at(i, j)]);
                    coef.push([-1.0 / h, 1.0 / h, 0.0]);
                }
                if j + 1 < ni {
                    idx.push([at(i, j), at(i, j + 1), at(i, j)]);
                    coef.push([-1.0 / h, 1.0 / h, 0.0]);
                }
            }
        }
        let c = 1.0 / (h * h);
        let mut span = n;
        for (di, dj) in convexity_directions(stencil_width) {
            span = span.max(2 * (di * ni + dj).unsigned_abs());
            for i in di.abs()..(ni - di.abs()) {
                for j in dj.abs()..(ni - dj.abs()) {
                    idx.push([at(i - di, j - dj), at(i, j), at(i + di, j + dj)]);
                    coef.push([c, -2.0 * c, c]);
                }
            }
        }
        ConstraintRows { idx, coef, span }
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let (ix, cf) = (&self.idx[r], &self.coef[r]);
            *o = cf[0] * u[ix[0]] + cf[1] * u[ix[1]] + cf[2] * u[ix[2]];
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                let (ix, cf) = (&self.idx[r], &self.coef[r]);
                for t in 0..3 {
                    out[ix[t]] += cf[t] * yr;
                }
            }
        }
    }
}

pub(crate) struct IpmOutcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub dual_residual: f64,
    pub gap: f64,
    pub converged: bool,
}

/// Quadratic part `K` of `-Phi` (the edge Laplacian of the triangulation),
/// scaled by `1 / h^2`, together with the linear term `c / h^2`.
fn scaled_quadratic(params: &ModelParams, bw: usize) -> (SymBanded, Vec<f64>) {
    let n = params.n;
    let h2 = params.h() * params.h();
    let mut k = SymBanded::zeros(n * n, bw);
    for i in 0..n {
        for j in 0..n {
            let p = i * n + j;
            if i + 1 < n {
                // Horizontal edge: shared by two triangles unless on the bottom/top row.
                let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                let q = (i + 1) * n + j;
                k.add(p, p, w / h2);
                k.add(q, q, w / h2);
                k.add(q, p, -w / h2);
            }
            if j + 1 < n {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                let q = i * n + j + 1;
                k.add(p, p, w / h2);
                k.add(q, q, w / h2);
                k.add(q, p, -w / h2);
            }
        }
    }
    let zero = crate::grid::ScalarField::zeros(*params);
    let c = functional::phi_gradient(&zero).values.into_iter().map(|v| v / h2).collect();
    (k, c)
}

fn max_step(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(1.0f64, f64::min)
}

pub(crate) fn solve_ipm(params: &ModelParams, stencil_width: u8, tol: f64, max_iters: usize) -> Result<IpmOutcome> {
    let n = params.n;
    let nn = n * n;
    let rows = ConstraintRows::new(n, stencil_width);
    let m = rows.len();
    let bw = rows.span.max(n);
    let (k_band, c) = scaled_quadratic(params, bw);

    let mut u = vec![0.0; nn];
    let mut s = vec![1.0; m];
    let mut z = vec![1.0; m];
    let mut au = vec![0.0; m];
    let mut atz = vec![0.0; nn];
    let mut rp = vec![0.0f64; m];
    let mut rd = vec![0.0f64; nn];
    let mut d = vec![0.0; m];

    let mut iterations = 0;
    let mut dual_residual = f64::INFINITY;
    let mut gap = f64::INFINITY;
    let mut converged = false;

    while iterations < max_iters {
        rows.apply(&u, &mut au);
        rows.apply_transpose(&z, &mut atz);
        let ku = k_band.mul(&u);
        for k in 0..nn {
            rd[k] = ku[k] - c[k] - atz[k];
        }
        for r in 0..m {
            rp[r] = au[r] - s[r];
        }
        let mu = s.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / m as f64;
        dual_residual = rd.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let primal_res = rp.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        gap = mu;
        if dual_residual <= tol && primal_res <= tol && gap <= tol {
            converged = true;
            break;
        }
        iterations += 1;

        for r in 0..m {
            d[r] = z[r] / s[r];
        }
        let mut mat = k_band.clone();
        for r in 0..m {
            let (ix, cf) = (&rows.idx[r], &rows.coef[r]);
            let dr = d[r];
            for a in 0..3 {
                if cf[a] == 0.0 {
                    continue;
                }
                for b in 0..=a {
                    if cf[b] == 0.0 {
                        continue;
                    }
                    let v = dr * cf[a] * cf[b];
                    if ix[a] == ix[b] && a != b {
                        mat.add(ix[a], ix[b], 2.0 * v);
                    } else {
                        mat.add(ix[a], ix[b], v);
                    }
                }
            }
        }
        let chol = mat.cholesky(1e-30)?;

        // Newton direction for complementarity target `rc`.
        let direction = |rc: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            let w: Vec<f64> = (0..m).map(|r| rc[r] / s[r] - d[r] * rp[r]).collect();
            let mut atw = vec![0.0; nn];
            rows.apply_transpose(&w, &mut atw);
            let rhs: Vec<f64> = (0..nn).map(|k| -rd[k] + atw[k]).collect();
            let du = chol.solve(&rhs);
            let mut adu = vec![0.0; m];
            rows.apply(&du, &mut adu);
            let ds: Vec<f64> = (0..m).map(|r| adu[r] + rp[r]).collect();
            let dz: Vec<f64> = (0..m).map(|r| rc[r] / s[r] - d[r] * ds[r]).collect();
            (du, ds, dz)
        };

        let rc_aff: Vec<f64> = s.iter().zip(&z).map(|(a, b)| -a * b).collect();
        let (_, ds_a, dz_a) = direction(&rc_aff);
        let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = (0..m)
            .map(|r| (s[r] + alpha_aff * ds_a[r]) * (z[r] + alpha_aff * dz_a[r]))
            .sum::<f64>()
            / m as f64;
        let sigma = (mu_aff / mu).powi(3).min(1.0);
        let rc: Vec<f64> = (0..m)
            .map(|r| -s[r] * z[r] - ds_a[r] * dz_a[r] + sigma * mu)
            .collect();
        let (du, ds, dz) = direction(&rc);
        let alpha = (0.995 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        if !alpha.is_finite() || du.iter().chain(&ds).chain(&dz).any(|v| !v.is_finite()) {
            // Newton system too ill-conditioned to make progress; keep the
            // current iterate if it is already accurate.
            if dual_residual <= 10.0 * tol && primal_res <= 10.0 * tol && mu <= 10.0 * tol {
                converged = true;
                break;
            }
            return Err(Error::Divergence(format!("non-finite Newton step at interior-point iteration {iterations}")));
        }
        for k in 0..nn {
            u[k] += alpha * du[k];
        }
        for r in 0..m {
            s[r] += alpha * ds[r];
            z[r] += alpha * dz[r];
        }
    }
    Ok(IpmOutcome { u, iterations, dual_residual, gap, converged })
}
