//! Outer search over the blunt-strip end `t10` and the segment lengths
//! `R(theta)` of the targeted-bunching fan. Each candidate fixes the
//! interface, the Poisson solve on the region above it gives `u2`, and the
//! objective measures how badly the normal derivatives of the two sides
//! disagree plus how far the pieced-together field is from convex.

use std::f64::consts::SQRT_2;

use serde::Serialize;

use crate::closed_form::BluntProfile;
use crate::direct::{self, SolverConfig};
use crate::error::{Error, Result};
use crate::euler_lagrange::{
    integrate_fan_partial, u1_minus_eval, validate_fan_geometry, BunchInput, FanSolution, THETA_END, THETA_START,
};
use crate::grid::{directional_second_differences, gradient, ScalarField};
use crate::par::Exec;
use crate::params::ModelParams;
use crate::regions::{classify, extract_interface, InterfaceCurve, Region, RegionMap, DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL};

use super::domain::PolygonalDomain;
use super::poisson::{extra_neumann_residual, solve_bvp, BvpProblem, BvpSolution, DirichletData, ExtraResidual};
use super::refute::constant_strip_ansatz;

/// Objective floor for candidates whose fan leaves the allowed half-square.
const GEOMETRY_PENALTY: f64 = 50.0;
/// Objective for candidates whose Poisson solve fails.
const SOLVE_PENALTY: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    /// Number of `R` samples, equally spaced on `[-pi/4, theta_max]`.
    pub k: usize,
    /// Last sample angle; `R` is held constant beyond it.
    pub theta_max: f64,
    /// Evaluation budget per grid level.
    pub max_evals: usize,
    pub initial_step: f64,
    pub min_step: f64,
    /// Weight of the convexity term in the objective.
    pub penalty_weight: f64,
    /// Runge–Kutta step for the fan.
    pub fan_step: f64,
    /// Fixed-point passes when fitting `R` to the seed interface.
    pub seed_iterations: usize,
    /// Search first on this grid when it is coarser than the target.
    pub coarse_n: Option<usize>,
    /// Objective value regarded as a successful calibration.
    pub residual_floor: f64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k: 12,
            theta_max: 0.25,
            max_evals: 1500,
            initial_step: 0.02,
            min_step: 2e-4,
            penalty_weight: 1.0,
            fan_step: 0.005,
            seed_iterations: 8,
            coarse_n: Some(64),
            residual_floor: 1e-2,
            exec: Exec::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if self.k < 3 {
            return bad("calibration needs k >= 3 R samples");
        }
        if !(self.theta_max > THETA_START && self.theta_max <= THETA_END) {
            return bad("theta_max must lie in (-pi/4, pi/2]");
        }
        if self.max_evals == 0 {
            return bad("max_evals must be positive");
        }
        if !(self.initial_step > 0.0 && self.min_step > 0.0 && self.min_step <= self.initial_step) {
            return bad("need 0 < min_step <= initial_step");
        }
        if !(self.penalty_weight >= 0.0 && self.fan_step > 0.0 && self.residual_floor >= 0.0) {
            return bad("penalty weight, fan step and residual floor must be nonnegative");
        }
        Ok(())
    }

    /// The angles carrying the `R` samples.
    pub fn thetas(&self) -> Vec<f64> {
        let d = (self.theta_max - THETA_START) / (self.k - 1) as f64;
        (0..self.k).map(|i| THETA_START + i as f64 * d).collect()
    }
}

/// A point of the search space. `r[0]` is tied to `t10`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub t10: f64,
    pub r: Vec<f64>,
}

impl Candidate {
    fn clamped(params: &ModelParams, t10: f64, mut r: Vec<f64>) -> Self {
        let a = params.a;
        let t10 = t10.clamp(2.0 * a + 1e-3, 2.0 * a + 1.0);
        r[0] = BunchInput::initial_length(a, t10);
        for v in r.iter_mut().skip(1) {
            *v = v.clamp(0.0, SQRT_2 - 1e-9);
        }
        Candidate { t10, r }
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut x = vec![self.t10];
        x.extend_from_slice(&self.r[1..]);
        x
    }

    fn from_vec(params: &ModelParams, x: &[f64]) -> Self {
        let mut r = vec![0.0];
        r.extend_from_slice(&x[1..]);
        Candidate::clamped(params, x[0], r)
    }

    pub fn input(&self, params: &ModelParams, cfg: &SearchConfig) -> Result<BunchInput> {
        Ok(BunchInput::from_samples(params, self.t10, cfg.thetas(), self.r.clone())?.clipped_to_diagonal())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Valid,
    BadGeometry,
    SolveFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub objective: f64,
    pub extra_l2: f64,
    pub extra_sup: f64,
    pub convexity_penalty: f64,
    pub status: CandidateStatus,
}

impl Evaluation {
    fn failed(status: CandidateStatus, objective: f64) -> Self {
        Evaluation { objective, extra_l2: f64::NAN, extra_sup: f64::NAN, convexity_penalty: f64::NAN, status }
    }
}

/// Everything built from one candidate.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub fan: FanSolution,
    pub problem: BvpProblem,
    pub bvp: BvpSolution,
    pub extra: ExtraResidual,
    /// `0`, `U`, the two fans and `u2` pieced together.
    pub field: ScalarField,
    /// Nodes outside the region that no fan segment reached; they take the
    /// nearest interface value.
    pub unassigned: usize,
}

/// Largest jump of the assembled field across grid edges that cross the
/// interface, and the allowed bound `5 h max|Du|`.
pub fn interface_jump(field: &ScalarField, mask: &[bool]) -> (f64, f64) {
    let n = field.n();
    let mut jump = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            for q in [(i + 1 < n).then(|| k + n), (j + 1 < n).then(|| k + 1)].into_iter().flatten() {
                if mask[k] != mask[q] {
                    jump = jump.max((field.values[k] - field.values[q]).abs());
                }
            }
        }
    }
    let g = gradient(field);
    let dmax = g.d1.iter().zip(&g.d2).map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max);
    (jump, 5.0 * field.params.h() * dmax)
}

/// Integral of the negative part of the second directional derivatives,
/// averaged over the lattice directions. Kinks contribute their slope drop
/// times their length, independently of the grid.
pub fn convexity_penalty(u: &ScalarField) -> f64 {
    let dirs = directional_second_differences(u, 1).expect("width 1 is valid");
    let total: f64 = dirs
        .iter()
        .map(|d| {
            let len2 = (d.dir.0 * d.dir.0 + d.dir.1 * d.dir.1) as f64;
            d.values.iter().map(|v| (-v).max(0.0)).sum::<f64>() / len2
        })
        .sum();
    total / dirs.len() as f64
}

/// Integrates the candidate's fan. The fan ends where `R` vanishes, where
/// its denominator vanishes (the segments then rotate infinitely fast and
/// no further segment can be added), or where the pivot passes the top edge.
fn build_fan(params: &ModelParams, cfg: &SearchConfig, cand: &Candidate) -> Result<(FanSolution, bool)> {
    let input = cand.input(params, cfg)?;
    let (mut fan, err) = integrate_fan_partial(params, &input, cfg.fan_step)?;
    if fan.len() < 2 {
        return Err(err.unwrap_or_else(|| Error::EmptyRegion("fan is empty".into())));
    }
    let top = params.a + 1.0;
    if let Some(k) = fan.h.iter().position(|&v| v > top) {
        fan.truncate(k.max(1));
    }
    Ok((fan, err.is_some()))
}

/// Value and gradient of the fan profile at the pivot (`end = false`) or
/// the far end of segment `k`.
fn fan_data(fan: &FanSolution, k: usize, end: bool) -> ([f64; 2], f64, [f64; 2]) {
    let (p, q) = fan.segment(k);
    let (s, c) = fan.theta[k].sin_cos();
    let (m, mp) = (fan.m[k], fan.m_prime[k]);
    // The profile is m r + b along the segment; across segments its
    // derivative is m'.
    let grad = [m * c - mp * s, m * s + mp * c];
    if end {
        (q, m * fan.r[k] + fan.b[k], grad)
    } else {
        (p, fan.b[k], grad)
    }
}

/// Interface polyline (left edge to bottom edge), Dirichlet values and
/// gradients of the outer profile at its vertices.
fn fan_interface(fan: &FanSolution, h: f64) -> (Vec<[f64; 2]>, Vec<f64>, Vec<[f64; 2]>) {
    let last_k = fan.len() - 1;
    let mut upper: Vec<_> = Vec::new();
    if fan.r[last_k] > 1e-12 {
        // The fan stopped before its segments shrank to the pivot: the
        // interface starts at the last pivot on the left edge.
        upper.push(fan_data(fan, last_k, false));
    }
    upper.extend((0..fan.len()).rev().map(|k| fan_data(fan, k, true)));
    let mut pts = Vec::new();
    let mut vals = Vec::new();
    let mut grads = Vec::new();
    let mut push = |p: [f64; 2], v: f64, g: [f64; 2], force: bool| {
        if let Some(last) = pts.last() {
            let last: &[f64; 2] = last;
            let d = (p[0] - last[0]).hypot(p[1] - last[1]);
            if d < 1e-12 || (!force && d < 0.25 * h) {
                return;
            }
        }
        pts.push(p);
        vals.push(v);
        grads.push(g);
    };
    let last = upper.len() - 1;
    for (idx, (p, v, g)) in upper.iter().enumerate() {
        push(*p, *v, *g, idx == 0 || idx == last);
    }
    // The part below the diagonal is the mirror image.
    for (idx, (p, v, g)) in upper.iter().rev().enumerate().skip(1) {
        push([p[1], p[0]], *v, [g[1], g[0]], idx == last);
    }
    (pts, vals, grads)
}

/// Builds the fan, the region above its outer curve, solves for `u2` and
/// pieces the field together.
pub fn assemble(params: &ModelParams, cfg: &SearchConfig, cand: &Candidate) -> Result<Assembled> {
    let (fan, _) = build_fan(params, cfg, cand)?;
    let geo = validate_fan_geometry(&fan, params);
    if !geo.all_pass() {
        return Err(Error::Validation(format!("fan geometry invalid: {geo:?}")));
    }
    let h = params.h();
    let (pts, vals, grads) = fan_interface(&fan, h);
    let domain = PolygonalDomain::new(*params, pts)?;
    let normals = domain.vertex_normals();
    let u1_normal: Vec<f64> = grads.iter().zip(&normals).map(|(g, nv)| g[0] * nv[0] + g[1] * nv[1]).collect();
    let problem = BvpProblem::model(domain, DirichletData::Vertices(vals.clone()));
    let bvp = solve_bvp(&problem)?;
    let extra = extra_neumann_residual(&problem, &bvp, &u1_normal)?;

    let prof = BluntProfile::new(params.a);
    let n = params.n;
    let t10 = cand.t10;
    let iface = &problem.domain.interface;
    let values: Vec<(f64, bool)> = cfg.exec.map(n * n, |q| {
        if bvp.mask[q] {
            return (bvp.u2.values[q], true);
        }
        let x = [params.coord(q / n), params.coord(q % n)];
        if x[0] + x[1] <= t10 + 1e-12 {
            return (prof.clipped(x[0] + x[1]), true);
        }
        let y = if x[1] >= x[0] { x } else { [x[1], x[0]] };
        match u1_minus_eval(&fan, y) {
            Ok(v) => (v, true),
            Err(_) => {
                let v = iface
                    .iter()
                    .zip(&vals)
                    .min_by(|a, b| {
                        let da = (a.0[0] - x[0]).hypot(a.0[1] - x[1]);
                        let db = (b.0[0] - x[0]).hypot(b.0[1] - x[1]);
                        da.total_cmp(&db)
                    })
                    .map_or(0.0, |p| *p.1);
                (v, false)
            }
        }
    });
    let unassigned = values.iter().filter(|v| !v.1).count();
    let field = ScalarField::from_values(*params, values.into_iter().map(|v| v.0).collect())?;
    Ok(Assembled { fan, problem, bvp, extra, field, unassigned })
}

/// Objective of one candidate; failures map to graded penalties so the
/// search can still move towards the feasible set.
pub fn evaluate(params: &ModelParams, cfg: &SearchConfig, cand: &Candidate) -> Evaluation {
    match build_fan(params, cfg, cand) {
        Err(_) => return Evaluation::failed(CandidateStatus::SolveFailed, SOLVE_PENALTY),
        Ok((fan, _)) => {
            let geo = validate_fan_geometry(&fan, params);
            if !geo.all_pass() {
                let excess = geo.max_outside.max(0.0)
                    + geo.max_below_diagonal.max(0.0)
                    + if geo.non_crossing { 0.0 } else { 1.0 }
                    + if geo.monotone_h { 0.0 } else { 1.0 };
                return Evaluation::failed(CandidateStatus::BadGeometry, GEOMETRY_PENALTY + excess);
            }
        }
    }
    match assemble(params, cfg, cand) {
        Ok(asm) => score(cfg, &asm.extra, &asm.field),
        Err(_) => Evaluation::failed(CandidateStatus::SolveFailed, SOLVE_PENALTY),
    }
}

fn score(cfg: &SearchConfig, extra: &ExtraResidual, field: &ScalarField) -> Evaluation {
    let pen = convexity_penalty(field);
    Evaluation {
        objective: extra.l2 + cfg.penalty_weight * pen,
        extra_l2: extra.l2,
        extra_sup: extra.sup,
        convexity_penalty: pen,
        status: CandidateStatus::Valid,
    }
}

/// The same objective for the constant-strip ansatz (no fan, straight
/// interface at `2a + sqrt(6)/3`).
pub fn ansatz_evaluation(params: &ModelParams, cfg: &SearchConfig) -> Result<Evaluation> {
    let ans = constant_strip_ansatz(params)?;
    Ok(score(cfg, &ans.extra, &ans.field))
}

/// First hit of the ray from `p` in direction `dir` with the polyline.
fn ray_hit(poly: &[[f64; 2]], p: [f64; 2], dir: [f64; 2]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for w in poly.windows(2) {
        let e = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
        let den = dir[0] * e[1] - dir[1] * e[0];
        if den.abs() < 1e-14 {
            continue;
        }
        let r = [w[0][0] - p[0], w[0][1] - p[1]];
        let t = (r[0] * e[1] - r[1] * e[0]) / den;
        let s = (r[0] * dir[1] - r[1] * dir[0]) / den;
        if t > 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&s) && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    }
    best
}

/// What the search starts from: the blunt-strip end and the interface
/// between the bunching and customized regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub t10: f64,
    pub curve: InterfaceCurve,
}

impl Seed {
    /// Reads the seed off a classified direct solution. `t10` is the median,
    /// over anti-diagonal slices where blunt bunching is directly followed by
    /// targeted bunching, of the level halfway between the two.
    pub fn from_map(map: &RegionMap) -> Result<Self> {
        let curve = extract_interface(map)?;
        let n = map.n() as isize;
        let h = map.params.h();
        let mut tops = Vec::new();
        for k in -(n - 1)..n {
            let mut prev: Option<(Region, isize)> = None;
            for j in (-k).max(0)..=(n - 1 - k).min(n - 1) {
                let i = j + k;
                let r = map.get(i as usize, j as usize);
                if let Some((Region::BluntBunch, t)) = prev {
                    if matches!(r, Region::TargetedMinus | Region::TargetedPlus) {
                        tops.push(map.params.coord(0) * 2.0 + t as f64 * h + h);
                        break;
                    }
                }
                if r == Region::Customized {
                    break;
                }
                prev = Some((r, i + j));
            }
        }
        let t10 = if tops.is_empty() {
            curve.eval(0.0)
        } else {
            tops.sort_by(f64::total_cmp);
            tops[tops.len() / 2]
        };
        Ok(Seed { t10, curve })
    }
}

/// Starting point: `t10` from the seed and `R` fitted by casting each
/// segment's ray onto the seed interface (or the diagonal, whichever comes
/// first), iterating because the pivots move with `R`.
pub fn seed_candidate(params: &ModelParams, cfg: &SearchConfig, seed: &Seed) -> Result<Candidate> {
    cfg.validate()?;
    let a = params.a;
    let poly = PolygonalDomain::from_curve(*params, &seed.curve)?.interface;
    let diagonal = [[a, a], [a + 1.0, a + 1.0]];
    let thetas = cfg.thetas();
    let t10 = seed.t10.clamp(2.0 * a + 1e-3, 2.0 * a + 1.0);
    let r0 = BunchInput::initial_length(a, t10);
    let r: Vec<f64> = thetas.iter().map(|_| r0).collect();
    let mut cand = Candidate::clamped(params, t10, r);
    for _ in 0..cfg.seed_iterations {
        let input = cand.input(params, cfg)?;
        let (fan, _) = integrate_fan_partial(params, &input, cfg.fan_step)?;
        let pivot = |th: f64| -> f64 {
            if fan.is_empty() {
                return t10 - a;
            }
            if th >= fan.theta_max().unwrap_or(THETA_START) {
                return fan.h[fan.len() - 1];
            }
            fan.state_at(th).1
        };
        let mut r = cand.r.clone();
        for (i, th) in thetas.iter().enumerate().skip(1) {
            let p = [a, pivot(*th).min(a + 1.0)];
            let (s, c) = th.sin_cos();
            let hit = [ray_hit(&poly, p, [c, s]), ray_hit(&diagonal, p, [c, s])]
                .into_iter()
                .flatten()
                .fold(f64::INFINITY, f64::min);
            if hit.is_finite() {
                r[i] = hit;
            }
        }
        cand = Candidate::clamped(params, t10, r);
    }
    Ok(cand)
}

/// Search diagnostics and the best candidate found.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub a: f64,
    pub n: usize,
    pub k: usize,
    pub theta: Vec<f64>,
    pub seed: Candidate,
    pub seed_evaluation: Evaluation,
    pub best: Candidate,
    pub best_evaluation: Evaluation,
    pub ansatz_evaluation: Evaluation,
    pub evaluations: usize,
    pub final_step: f64,
    pub reached_floor: bool,
    /// `None` when no candidate could be assembled.
    pub interface_jump: Option<f64>,
    pub interface_jump_bound: Option<f64>,
    pub unassigned_nodes: Option<usize>,
    pub message: String,
}

/// Complete-poll compass search with step halving; the poll points are
/// evaluated concurrently.
fn pattern_search(params: &ModelParams, cfg: &SearchConfig, start: &Candidate, step0: f64) -> (Candidate, Evaluation, usize, f64) {
    let mut x = start.to_vec();
    let mut best = evaluate(params, cfg, start);
    let mut evals = 1;
    let mut step = step0;
    let dim = x.len();
    while step >= cfg.min_step && evals < cfg.max_evals {
        let polls: Vec<Vec<f64>> = (0..2 * dim)
            .map(|q| {
                let mut y = x.clone();
                y[q / 2] += if q % 2 == 0 { step } else { -step };
                y
            })
            .collect();
        let results = cfg.exec.map(polls.len(), |q| evaluate(params, cfg, &Candidate::from_vec(params, &polls[q])));
        evals += polls.len();
        let (q, e) = results
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective))
            .expect("poll set is not empty");
        if e.objective < best.objective {
            best = *e;
            x = Candidate::from_vec(params, &polls[q]).to_vec();
        } else {
            step *= 0.5;
        }
    }
    (Candidate::from_vec(params, &x), best, evals, step)
}

/// Calibrates `(t10, R)` starting from `seed`, first on the coarse grid
/// (if configured) and then on `params.n`. Not reaching the residual floor
/// is reported, not raised.
pub fn calibrate(params: &ModelParams, cfg: &SearchConfig, seed: &Seed) -> Result<(CalibrationReport, Option<Assembled>)> {
    params.validate()?;
    cfg.validate()?;
    let start = seed_candidate(params, cfg, seed)?;
    let seed_evaluation = evaluate(params, cfg, &start);
    let mut cand = start.clone();
    let mut evaluations = 0;
    let mut step = cfg.initial_step;
    if let Some(nc) = cfg.coarse_n.filter(|&nc| nc < params.n) {
        let coarse = ModelParams { n: nc, ..*params };
        let (c, _, e, s) = pattern_search(&coarse, cfg, &cand, step);
        cand = c;
        evaluations += e;
        step = (4.0 * s).min(cfg.initial_step);
    }
    let (best, best_evaluation, e, final_step) = pattern_search(params, cfg, &cand, step);
    evaluations += e;
    let ansatz = ansatz_evaluation(params, cfg)?;
    let asm = assemble(params, cfg, &best).ok();
    let jumps = asm.as_ref().map(|a| interface_jump(&a.field, &a.bvp.mask));
    let reached_floor = best_evaluation.objective <= cfg.residual_floor;
    let message = if asm.is_none() {
        format!("no valid candidate found (best status {:?})", best_evaluation.status)
    } else if reached_floor {
        "residual floor reached".to_string()
    } else {
        format!(
            "search stopped at objective {:.4e} above the floor {:.1e}; best candidate reported",
            best_evaluation.objective, cfg.residual_floor
        )
    };
    let report = CalibrationReport {
        a: params.a,
        n: params.n,
        k: cfg.k,
        theta: cfg.thetas(),
        seed: start,
        seed_evaluation,
        best,
        best_evaluation,
        ansatz_evaluation: ansatz,
        evaluations,
        final_step,
        reached_floor,
        interface_jump: jumps.map(|j| j.0),
        interface_jump_bound: jumps.map(|j| j.1),
        unassigned_nodes: asm.as_ref().map(|a| a.unassigned),
        message,
    };
    Ok((report, asm))
}

/// Runs the direct solver, classifies its solution and calibrates from the
/// extracted interface.
pub fn calibrate_from_direct(
    params: &ModelParams,
    cfg: &SearchConfig,
) -> Result<(CalibrationReport, Option<Assembled>, ScalarField)> {
    let (u, _) = direct::solve(params, &SolverConfig::default())?;
    let map = classify(&u, DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL)?;
    let (report, asm) = calibrate(params, cfg, &Seed::from_map(&map)?)?;
    Ok((report, asm, u))
}
