//! Direct maximization of the discrete profit functional over nonnegative,
//! nondecreasing, discretely convex grid functions.

mod functional;
mod ipm;
mod projection;

pub use functional::{evaluate_phi, evaluate_phi_with, lipschitz_estimate, phi_gradient, phi_gradient_with};
pub use projection::{is_feasible, FeasibleCone, ProjectionStats};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::ScalarField;
use crate::par::Exec;
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSize {
    /// `1 / L` with `L` from power iteration on the quadratic form.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Primal-dual interior point with banded Newton solves.
    InteriorPoint,
    /// Accelerated projected-gradient ascent with Dykstra projections.
    /// Only practical on small grids.
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iters: usize,
    pub step_size: StepSize,
    /// Tolerance on the projected-gradient residual, measured per unit area
    /// so that it does not scale with the grid.
    pub kkt_tol: f64,
    /// Pass limit for each projection.
    pub projection_iters: usize,
    pub stencil_width: u8,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::InteriorPoint,
            max_iters: 40_000,
            step_size: StepSize::Auto,
            kkt_tol: 1e-8,
            projection_iters: 20_000,
            stencil_width: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.kkt_tol > 0.0 && self.kkt_tol.is_finite()) {
            return invalid(format!("kkt_tol must be positive, got {}", self.kkt_tol));
        }
        if self.projection_iters == 0 {
            return invalid("projection_iters must be at least 1");
        }
        if !(self.stencil_width == 1 || self.stencil_width == 2) {
            return invalid(format!("stencil width must be 1 or 2, got {}", self.stencil_width));
        }
        if let StepSize::Fixed(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return invalid(format!("step size must be positive, got {s}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub phi: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub stationarity_residual: f64,
    pub converged: bool,
}

/// Projects `u` onto the feasible cone from a cold start.
pub fn project_feasible(u: &ScalarField, cfg: &SolverConfig) -> Result<ScalarField> {
    cfg.validate()?;
    let mut cone = FeasibleCone::new(u.n(), cfg.stencil_width);
    let mut v = u.values.clone();
    let stats = cone.project(Exec::default(), &mut v, 0.01 * cfg.kkt_tol, cfg.projection_iters);
    if stats.violation > cfg.kkt_tol {
        return Err(Error::NonConvergence(format!(
            "projection violates constraints by {:e} after {} passes",
            stats.violation, stats.passes
        )));
    }
    Ok(ScalarField { params: u.params, values: v })
}

/// Number of consecutive rejected candidates that signals a broken step.
const DIVERGENCE_STREAK: usize = 50;

/// Maximizes the discrete profit over the feasible cone.
pub fn solve(params: &ModelParams, cfg: &SolverConfig) -> Result<(ScalarField, SolveReport)> {
    params.validate()?;
    cfg.validate()?;
    match cfg.method {
        Method::InteriorPoint => solve_interior_point(params, cfg),
        Method::ProjectedGradient => solve_with(Exec::default(), params, cfg),
    }
}

fn solve_interior_point(params: &ModelParams, cfg: &SolverConfig) -> Result<(ScalarField, SolveReport)> {
    let out = ipm::solve_ipm(params, cfg.stencil_width, cfg.kkt_tol, cfg.max_iters.min(500))?;
    let u = ScalarField::from_values(*params, out.u)?;
    let primal_residual = FeasibleCone::new(params.n, cfg.stencil_width).violation(&u.values);
    let report = SolveReport {
        phi: evaluate_phi(&u),
        iterations: out.iterations,
        primal_residual,
        stationarity_residual: out.dual_residual.max(out.gap),
        converged: out.converged,
    };
    Ok((u, report))
}

/// Accelerated projected-gradient ascent from `u = 0`.
///
/// Candidates that lower `Phi` are rejected and the momentum is reset, so the
/// accepted iterates ascend monotonically.
pub fn solve_with(exec: Exec, params: &ModelParams, cfg: &SolverConfig) -> Result<(ScalarField, SolveReport)> {
    params.validate()?;
    cfg.validate()?;
    let h2 = params.h() * params.h();
    let mut x = ScalarField::zeros(*params);
    let lip = match cfg.step_size {
        StepSize::Auto => 1.02 * lipschitz_estimate(&x, 200),
        StepSize::Fixed(s) => 1.0 / s,
    };
    // Projection accuracy needed to resolve the stationarity target.
    let proj_tol = 0.05 * cfg.kkt_tol * h2 / lip;
    let mut cone = FeasibleCone::new(params.n, cfg.stencil_width);

    let nn = params.n * params.n;
    let mut x_prev = x.values.clone();
    let mut phi_x = evaluate_phi_with(exec, &x);
    let mut t = 1.0f64;
    let mut y = x.clone();
    let mut grad = vec![0.0; nn];
    let mut rejected = 0usize;
    let mut iterations = 0usize;
    let mut stationarity = f64::INFINITY;
    let mut converged = false;

    while iterations < cfg.max_iters {
        iterations += 1;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for k in 0..nn {
            y.values[k] = x.values[k] + beta * (x.values[k] - x_prev[k]);
        }
        functional::phi_gradient_into(exec, &y, &mut grad);
        let mut z = y.clone();
        for k in 0..nn {
            z.values[k] += grad[k] / lip;
        }
        let stats = cone.project(exec, &mut z.values, proj_tol, cfg.projection_iters);
        let phi_z = evaluate_phi_with(exec, &z);
        let step_len = z
            .values
            .iter()
            .zip(&y.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if phi_z + 1e-12 * phi_x.abs().max(1e-3) < phi_x {
            rejected += 1;
            // Near the optimum the inexact projection can cost more profit
            // than the step gains; stop if the iterate is already stationary.
            let r = stationarity_at(exec, &x, &mut cone, lip, proj_tol, cfg.projection_iters);
            stationarity = r;
            if r <= cfg.kkt_tol {
                converged = true;
                break;
            }
            if rejected >= DIVERGENCE_STREAK {
                if phi_x - phi_z <= 1e-8 * phi_x.abs().max(1.0) {
                    // Stalled at projection accuracy rather than diverging.
                    break;
                }
                return Err(Error::Divergence(format!(
                    "profit failed to increase for {DIVERGENCE_STREAK} consecutive steps at iteration {iterations}"
                )));
            }
            t = 1.0;
            x_prev.copy_from_slice(&x.values);
            continue;
        }
        rejected = 0;
        std::mem::swap(&mut x_prev, &mut x.values);
        x.values.copy_from_slice(&z.values);
        phi_x = phi_z;
        t = t_next;
        stationarity = lip * step_len / h2;
        if stationarity <= cfg.kkt_tol && stats.converged {
            // Confirm with a plain step from the accepted iterate.
            let r = stationarity_at(exec, &x, &mut cone, lip, proj_tol, cfg.projection_iters);
            stationarity = r;
            if r <= cfg.kkt_tol {
                converged = true;
                break;
            }
        }
    }

    let primal_residual = cone.violation(&x.values);
    let report = SolveReport {
        phi: phi_x,
        iterations,
        primal_residual,
        stationarity_residual: stationarity,
        converged,
    };
    Ok((x, report))
}

/// Per-unit-area projected gradient residual `L |u - P(u + grad/L)| / h^2`.
fn stationarity_at(
    exec: Exec,
    u: &ScalarField,
    cone: &mut FeasibleCone,
    lip: f64,
    proj_tol: f64,
    max_passes: usize,
) -> f64 {
    let h2 = u.params.h() * u.params.h();
    let mut grad = vec![0.0; u.values.len()];
    functional::phi_gradient_into(exec, u, &mut grad);
    let mut z: Vec<f64> = u.values.iter().zip(&grad).map(|(v, g)| v + g / lip).collect();
    cone.project(exec, &mut z, proj_tol, max_passes);
    lip * z.iter().zip(&u.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / h2
}

/// Stationarity residual of an arbitrary field, from a cold projection.
pub fn stationarity_residual(u: &ScalarField, cfg: &SolverConfig) -> f64 {
    let lip = 1.02 * lipschitz_estimate(u, 200);
    let mut cone = FeasibleCone::new(u.n(), cfg.stencil_width);
    let proj_tol = 0.05 * cfg.kkt_tol * u.params.h().powi(2) / lip;
    stationarity_at(Exec::default(), u, &mut cone, lip, proj_tol, cfg.projection_iters)
}
