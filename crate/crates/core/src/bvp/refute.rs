//! The constant-strip ansatz (bunching exactly on `t05 < x1 + x2 <= 2a + sqrt(6)/3`)
//! and the numerical check that it cannot be a convex maximizer.

use serde::Serialize;

use crate::closed_form::BluntProfile;
use crate::direct::evaluate_phi;
use crate::error::Result;
use crate::grid::ScalarField;
use crate::params::ModelParams;

use super::domain::PolygonalDomain;
use super::poisson::{extra_neumann_residual, solve_bvp, BvpProblem, BvpSolution, DirichletData, ExtraResidual};

/// `3 (1 - sqrt(2/3))`: the most `u_x2` can grow across the upper part of the
/// customization region if `u_x1x1 >= 0` there.
pub fn bound_lhs() -> f64 {
    3.0 * (1.0 - (2.0f64 / 3.0).sqrt())
}

pub const BOUND_RHS: f64 = 0.6;
/// `(a + 1) - (a + 1/10)`.
pub const REQUIRED_JUMP: f64 = 0.9;
/// Threshold on `u_x2` when searching for the interior point.
pub const SLOPE_MARGIN: f64 = 0.1;

pub const VERDICT_INCONSISTENT: &str = "ansatz inconsistent";
pub const VERDICT_NOT_REFUTED: &str = "ansatz not refuted";

/// The ansatz assembled on the grid.
#[derive(Debug, Clone)]
pub struct AnsatzSolution {
    pub problem: BvpProblem,
    pub bvp: BvpSolution,
    /// `0`, `U(x1 + x2)` and `u2` pieced together.
    pub field: ScalarField,
    pub extra: ExtraResidual,
}

pub fn constant_strip_ansatz(params: &ModelParams) -> Result<AnsatzSolution> {
    params.validate()?;
    let prof = BluntProfile::new(params.a);
    let domain = PolygonalDomain::straight(*params, prof.t15_rc)?;
    let dirichlet = DirichletData::Function(std::sync::Arc::new(move |x: [f64; 2]| prof.clipped(x[0] + x[1])));
    let problem = BvpProblem::model(domain, dirichlet);
    let bvp = solve_bvp(&problem)?;
    let field = bvp.merged(|x| prof.clipped(x[0] + x[1]));
    // Du1 = U'(t15) (1, 1) = (a, a) along the interface.
    let normal = vec![std::f64::consts::SQRT_2 * prof.clipped_slope(prof.t15_rc); problem.domain.interface.len()];
    let extra = extra_neumann_residual(&problem, &bvp, &normal)?;
    Ok(AnsatzSolution { problem, bvp, field, extra })
}

#[derive(Debug, Clone, Serialize)]
pub struct RefutationReport {
    pub a: f64,
    pub n: usize,
    pub t05: f64,
    pub t15: f64,
    pub bound_lhs: f64,
    pub bound_rhs: f64,
    pub required_jump: f64,
    /// Left end of the interface, `(a, a + sqrt(6)/3)`.
    pub x_prime: [f64; 2],
    pub ux2_at_x_prime: Option<f64>,
    /// First node to the right of `x_prime` with `u_x2 <= a + 1/10`.
    pub x_double_prime: Option<[f64; 2]>,
    pub ux2_at_x_double_prime: Option<f64>,
    /// Point on the top edge above `x_double_prime`.
    pub x_triple_prime: Option<[f64; 2]>,
    pub ux2_at_x_triple_prime: Option<f64>,
    /// `u_x2(x''') - u_x2(x'')`.
    pub measured_jump: Option<f64>,
    /// Gradient of `u2` at the interface midpoint, from inside the region.
    pub midpoint_gradient: [f64; 2],
    pub min_uxx: f64,
    pub min_uxx_at: [f64; 2],
    pub convexity_violated: bool,
    pub jump_chain_fails: bool,
    pub extra_residual_sup: f64,
    pub extra_residual_l2: f64,
    pub phi_ansatz: f64,
    pub linear_residual: f64,
    pub verdict: String,
}

/// Builds the ansatz, solves for `u2`, and checks both ways the ansatz can
/// fail: `u_x1x1 < -10 h` inside the region, or a rise in `u_x2` between
/// `x''` and the top edge larger than convexity allows.
pub fn refute_rc(params: &ModelParams) -> Result<RefutationReport> {
    let ans = constant_strip_ansatz(params)?;
    let a = params.a;
    let n = params.n;
    let h = params.h();
    let prof = BluntProfile::new(a);
    let u = &ans.field;
    let mask = &ans.bvp.mask;
    let inside = |i: usize, j: usize| mask[i * n + j];

    let x_prime = [a, prof.t15_rc - a];
    let ux2_at_x_prime = one_sided(&ans.bvp, x_prime, [0.0, 1.0], prof.clipped(prof.t15_rc), h);

    // Grid row closest to the height of x'.
    let row = ((x_prime[1] - a) / h).round() as usize;
    let mut x2p = None;
    if row >= 1 && row + 1 < n {
        for i in 1..n {
            if inside(i, row) && inside(i, row - 1) && inside(i, row + 1) {
                let d = (u.get(i, row + 1) - u.get(i, row - 1)) / (2.0 * h);
                if d <= a + SLOPE_MARGIN {
                    x2p = Some((i, d));
                    break;
                }
            }
        }
    }
    let (x_double_prime, ux2_at_x_double_prime, x_triple_prime, ux2_at_x_triple_prime, measured_jump) = match x2p {
        Some((i, d)) => {
            let top = (3.0 * u.get(i, n - 1) - 4.0 * u.get(i, n - 2) + u.get(i, n - 3)) / (2.0 * h);
            (Some(u.point(i, row)), Some(d), Some(u.point(i, n - 1)), Some(top), Some(top - d))
        }
        None => (None, None, None, None, None),
    };

    let mut min_uxx = f64::INFINITY;
    let mut min_uxx_at = [f64::NAN; 2];
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            if inside(i, j) && inside(i - 1, j) && inside(i + 1, j) && inside(i, j - 1) && inside(i, j + 1) {
                let v = (u.get(i + 1, j) - 2.0 * u.get(i, j) + u.get(i - 1, j)) / (h * h);
                if v < min_uxx {
                    min_uxx = v;
                    min_uxx_at = u.point(i, j);
                }
            }
        }
    }

    let mid = [0.5 * prof.t15_rc, 0.5 * prof.t15_rc];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // The Dirichlet data is constant along the interface, so the gradient is
    // normal to it.
    let dn = one_sided(&ans.bvp, mid, [s, s], prof.clipped(prof.t15_rc), h).unwrap_or(f64::NAN);
    let midpoint_gradient = [dn * s, dn * s];

    let convexity_violated = min_uxx < -10.0 * h;
    let jump_chain_fails = measured_jump.is_none_or(|j| j > bound_lhs());
    let verdict = if convexity_violated || jump_chain_fails { VERDICT_INCONSISTENT } else { VERDICT_NOT_REFUTED };
    Ok(RefutationReport {
        a,
        n,
        t05: prof.t05,
        t15: prof.t15_rc,
        bound_lhs: bound_lhs(),
        bound_rhs: BOUND_RHS,
        required_jump: REQUIRED_JUMP,
        x_prime,
        ux2_at_x_prime,
        x_double_prime,
        ux2_at_x_double_prime,
        x_triple_prime,
        ux2_at_x_triple_prime,
        measured_jump,
        midpoint_gradient,
        min_uxx,
        min_uxx_at,
        convexity_violated,
        jump_chain_fails,
        extra_residual_sup: ans.extra.sup,
        extra_residual_l2: ans.extra.l2,
        phi_ansatz: evaluate_phi(u),
        linear_residual: ans.bvp.linear_residual,
        verdict: verdict.to_string(),
    })
}

/// Second-order one-sided derivative of `u2` at boundary point `p` in
/// direction `dir`, with `g` the boundary value at `p`.
fn one_sided(sol: &BvpSolution, p: [f64; 2], dir: [f64; 2], g: f64, h: f64) -> Option<f64> {
    for mult in [2.0, 3.0, 4.0] {
        let d = mult * h;
        let q1 = [p[0] + d * dir[0], p[1] + d * dir[1]];
        let q2 = [p[0] + 2.0 * d * dir[0], p[1] + 2.0 * d * dir[1]];
        if let (Some(u1), Some(u2)) = (sol.interpolate(q1), sol.interpolate(q2)) {
            return Some((-3.0 * g + 4.0 * u1 - u2) / (2.0 * d));
        }
    }
    None
}
