//! Five-point Poisson solve `Lap u = f` on the masked region with
//! Shortley–Weller Dirichlet cuts at the interface and ghost-node Neumann
//! conditions on the square's edges.

use std::sync::Arc;

use crate::banded::Banded;
use crate::error::{Error, Result};
use crate::grid::ScalarField;

use super::domain::PolygonalDomain;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

type PointFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
type EdgeFn = Arc<dyn Fn(Edge, [f64; 2]) -> f64 + Send + Sync>;

/// Values of the outer solution on the interface.
#[derive(Clone)]
pub enum DirichletData {
    /// One value per interface vertex, linear along segments.
    Vertices(Vec<f64>),
    Function(PointFn),
}

impl std::fmt::Debug for DirichletData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DirichletData::Vertices(v) => f.debug_tuple("Vertices").field(&v.len()).finish(),
            DirichletData::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Prescribed normal-axis derivative on each edge: `u_x1` on the left and
/// right edges, `u_x2` on the bottom and top edges.
#[derive(Clone, Default)]
pub enum NeumannData {
    /// `(Du - x) . n = 0`, i.e. the derivative equals the coordinate.
    #[default]
    Model,
    Function(EdgeFn),
}

impl NeumannData {
    fn value(&self, edge: Edge, x: [f64; 2]) -> f64 {
        match self {
            NeumannData::Model => match edge {
                Edge::Left | Edge::Right => x[0],
                Edge::Bottom | Edge::Top => x[1],
            },
            NeumannData::Function(f) => f(edge, x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BvpProblem {
    pub domain: PolygonalDomain,
    pub dirichlet: DirichletData,
    pub neumann: NeumannData,
    /// Right-hand side of `Lap u = source`.
    pub source: f64,
}

impl std::fmt::Debug for NeumannData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NeumannData::Model => f.write_str("Model"),
            NeumannData::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl BvpProblem {
    /// The model problem `Lap u = 3` with `(Du - x) . n = 0` on the edges.
    pub fn model(domain: PolygonalDomain, dirichlet: DirichletData) -> Self {
        BvpProblem { domain, dirichlet, neumann: NeumannData::Model, source: 3.0 }
    }

    fn dirichlet_at(&self, seg: usize, s: f64, x: [f64; 2]) -> f64 {
        match &self.dirichlet {
            DirichletData::Vertices(v) => (1.0 - s) * v[seg] + s * v[seg + 1],
            DirichletData::Function(f) => f(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BvpSolution {
    /// Solution on the region's nodes (zero elsewhere).
    pub u2: ScalarField,
    pub mask: Vec<bool>,
    /// `|b - A u| / |b|` of the final linear solve.
    pub linear_residual: f64,
    /// Largest mismatch between the Dirichlet data and the solution
    /// extrapolated to the cut points.
    pub dirichlet_residual: f64,
    /// Largest mismatch between the Neumann data and one-sided edge
    /// derivatives.
    pub neumann_residual: f64,
    pub cut_count: usize,
}

impl BvpSolution {
    /// Field equal to `u2` on the region and to `outside` elsewhere.
    pub fn merged(&self, outside: impl Fn([f64; 2]) -> f64) -> ScalarField {
        let mut f = self.u2.clone();
        let n = f.n();
        for k in 0..n * n {
            if !self.mask[k] {
                f.values[k] = outside(f.point(k / n, k % n));
            }
        }
        f
    }

    /// Bilinear interpolation using region nodes only.
    pub fn interpolate(&self, x: [f64; 2]) -> Option<f64> {
        let p = self.u2.params;
        let n = p.n;
        let h = p.h();
        let si = ((x[0] - p.a) / h).clamp(0.0, (n - 1) as f64);
        let sj = ((x[1] - p.a) / h).clamp(0.0, (n - 1) as f64);
        let i = (si.floor() as usize).min(n - 2);
        let j = (sj.floor() as usize).min(n - 2);
        let corners = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)];
        if corners.iter().any(|&(a, b)| !self.mask[a * n + b]) {
            return None;
        }
        Some(self.u2.interpolate(x))
    }
}

/// Relative residual required of the linear solve.
pub const LINEAR_TOL: f64 = 1e-10;

/// One side of the 1-D second-difference stencil at a node.
enum Side {
    Unknown { node: usize },
    Known { dist: f64, value: f64 },
    Neumann { slope: f64 },
}

pub fn solve_bvp(problem: &BvpProblem) -> Result<BvpSolution> {
    let dom = &problem.domain;
    let params = dom.params;
    let n = params.n;
    let h = params.h();
    let nn = n * n;
    if let DirichletData::Vertices(v) = &problem.dirichlet {
        if v.len() != dom.interface.len() {
            return Err(Error::Validation(format!(
                "{} Dirichlet values for {} interface vertices",
                v.len(),
                dom.interface.len()
            )));
        }
    }
    if dom.node_count() == 0 {
        return Err(Error::EmptyRegion("no grid nodes above the interface".into()));
    }

    let mut mat = Banded::zeros(nn, n, n);
    let mut rhs = vec![0.0; nn];
    let mut cuts = 0usize;
    // Cut points with the two region nodes behind them, for the residual.
    let mut cut_records: Vec<([f64; 2], f64, f64, usize, Option<usize>)> = Vec::new();

    for k in 0..nn {
        if !dom.mask[k] {
            mat.add(k, k, 1.0);
            continue;
        }
        let (i, j) = (k / n, k % n);
        let x = [params.coord(i), params.coord(j)];
        let mut diag = 0.0;
        let mut b = -problem.source;
        for axis in 0..2 {
            let idx = if axis == 0 { i } else { j };
            let side = |dir: isize| -> Side {
                let nb = idx as isize + dir;
                if nb < 0 || nb >= n as isize {
                    let edge = match (axis, dir < 0) {
                        (0, true) => Edge::Left,
                        (0, false) => Edge::Right,
                        (_, true) => Edge::Bottom,
                        (_, false) => Edge::Top,
                    };
                    return Side::Neumann { slope: problem.neumann.value(edge, x) };
                }
                let q = if axis == 0 { nb as usize * n + j } else { i * n + nb as usize };
                if dom.mask[q] {
                    return Side::Unknown { node: q };
                }
                let y = [params.coord(q / n), params.coord(q % n)];
                match dom.crossing(x, y) {
                    Some((t, seg, s)) => {
                        let c = [x[0] + t * (y[0] - x[0]), x[1] + t * (y[1] - x[1])];
                        Side::Known { dist: (t * h).max(1e-10 * h), value: problem.dirichlet_at(seg, s, c) }
                    }
                    None => {
                        let value = problem.dirichlet_at_nearest(y);
                        Side::Known { dist: h, value }
                    }
                }
            };
            let lo = side(-1);
            let hi = side(1);
            let dist = |s: &Side| match s {
                Side::Unknown { .. } => h,
                Side::Known { dist, .. } => *dist,
                Side::Neumann { .. } => 0.0,
            };
            match (&lo, &hi) {
                (Side::Neumann { slope }, other) | (other, Side::Neumann { slope }) => {
                    // Quadratic through the node with the prescribed slope at
                    // the edge: u'' = 2 (u_o - u -+ g d) / d^2.
                    let d = dist(other);
                    let sign = if matches!(lo, Side::Neumann { .. }) { -1.0 } else { 1.0 };
                    let c = 2.0 / (d * d);
                    diag += c;
                    b += sign * 2.0 * slope / d;
                    match other {
                        Side::Unknown { node } => mat.add(k, *node, -c),
                        Side::Known { value, .. } => {
                            b += c * value;
                            cuts += 1;
                        }
                        Side::Neumann { .. } => unreachable!("grid has at least two nodes per axis"),
                    }
                }
                _ => {
                    let (dl, dr) = (dist(&lo), dist(&hi));
                    for (s, d, is_lo) in [(&lo, dl, true), (&hi, dr, false)] {
                        let c = 2.0 / (d * (dl + dr));
                        diag += c;
                        match s {
                            Side::Unknown { node } => mat.add(k, *node, -c),
                            Side::Known { value, dist } => {
                                b += c * value;
                                cuts += 1;
                                let off = if is_lo { -dist } else { *dist };
                                let cpos = if axis == 0 { [x[0] + off, x[1]] } else { [x[0], x[1] + off] };
                                let back = match if is_lo { &hi } else { &lo } {
                                    Side::Unknown { node } => Some(*node),
                                    _ => None,
                                };
                                cut_records.push((cpos, dist / h, *value, k, back));
                            }
                            Side::Neumann { .. } => unreachable!(),
                        }
                    }
                }
            }
        }
        // Row scaled by -1 so the matrix has a positive diagonal.
        mat.add(k, k, diag);
        rhs[k] = b;
    }
    if cuts == 0 {
        return Err(Error::SingularSystem("no Dirichlet data reaches the region (pure Neumann problem)".into()));
    }

    let lu = mat.lu()?;
    let mut u = lu.solve(&rhs);
    let norm_b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut residual = f64::INFINITY;
    for _ in 0..4 {
        let au = mat.mul(&u);
        let r: Vec<f64> = rhs.iter().zip(&au).map(|(b, a)| b - a).collect();
        residual = r.iter().map(|v| v * v).sum::<f64>().sqrt() / norm_b;
        if residual <= LINEAR_TOL * 1e-2 {
            break;
        }
        let du = lu.solve(&r);
        u.iter_mut().zip(&du).for_each(|(a, d)| *a += d);
    }
    if !(residual <= LINEAR_TOL) {
        return Err(Error::NonConvergence(format!("linear residual {residual:e} above {LINEAR_TOL:e}")));
    }
    for k in 0..nn {
        if !dom.mask[k] {
            u[k] = 0.0;
        }
    }
    let u2 = ScalarField::from_values(params, u)?;

    let mut dirichlet_residual = 0.0f64;
    for (_, t, g, node, back) in &cut_records {
        if let Some(bk) = back {
            // Linear extrapolation through the node and the one behind it.
            let (u0, u1) = (u2.values[*node], u2.values[*bk]);
            let pred = u0 + t * (u0 - u1);
            dirichlet_residual = dirichlet_residual.max((pred - g).abs());
        }
    }
    let neumann_residual = neumann_mismatch(problem, &u2);
    Ok(BvpSolution {
        u2,
        mask: dom.mask.clone(),
        linear_residual: residual,
        dirichlet_residual,
        neumann_residual,
        cut_count: cuts,
    })
}

impl BvpProblem {
    fn dirichlet_at_nearest(&self, y: [f64; 2]) -> f64 {
        let iface = &self.domain.interface;
        let mut best = (f64::INFINITY, 0usize, 0.0);
        for (k, w) in iface.windows(2).enumerate() {
            let e = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let len2 = (e[0] * e[0] + e[1] * e[1]).max(1e-300);
            let s = (((y[0] - w[0][0]) * e[0] + (y[1] - w[0][1]) * e[1]) / len2).clamp(0.0, 1.0);
            let c = [w[0][0] + s * e[0], w[0][1] + s * e[1]];
            let d = (y[0] - c[0]).hypot(y[1] - c[1]);
            if d < best.0 {
                best = (d, k, s);
            }
        }
        let w = &iface[best.1..best.1 + 2];
        let c = [w[0][0] + best.2 * (w[1][0] - w[0][0]), w[0][1] + best.2 * (w[1][1] - w[0][1])];
        self.dirichlet_at(best.1, best.2, c)
    }
}

/// Largest gap between the Neumann data and second-order one-sided
/// derivatives at region nodes on the edges.
fn neumann_mismatch(problem: &BvpProblem, u: &ScalarField) -> f64 {
    let n = u.n();
    let h = u.params.h();
    let m = &problem.domain.mask;
    let mut worst = 0.0f64;
    let mut check = |edge: Edge, nodes: [(usize, usize); 3], sign: f64| {
        if nodes.iter().all(|&(i, j)| m[i * n + j]) {
            let v: Vec<f64> = nodes.iter().map(|&(i, j)| u.get(i, j)).collect();
            let d = sign * (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
            let x = u.point(nodes[0].0, nodes[0].1);
            worst = worst.max((d - problem.neumann.value(edge, x)).abs());
        }
    };
    for s in 0..n {
        check(Edge::Left, [(0, s), (1, s), (2, s)], 1.0);
        check(Edge::Right, [(n - 1, s), (n - 2, s), (n - 3, s)], -1.0);
        check(Edge::Bottom, [(s, 0), (s, 1), (s, 2)], 1.0);
        check(Edge::Top, [(s, n - 1), (s, n - 2), (s, n - 3)], -1.0);
    }
    worst
}

/// Mismatch of normal derivatives across the interface.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExtraResidual {
    pub sup: f64,
    pub l2: f64,
    /// `(arclength, residual)` at the vertices where it could be evaluated.
    pub samples: Vec<(f64, f64)>,
    pub skipped: usize,
}

/// One-sided normal derivative of `u2` at each interface vertex minus the
/// supplied normal derivative of the outer solution there.
pub fn extra_neumann_residual(problem: &BvpProblem, sol: &BvpSolution, u1_normal: &[f64]) -> Result<ExtraResidual> {
    let dom = &problem.domain;
    if u1_normal.len() != dom.interface.len() {
        return Err(Error::Validation(format!(
            "{} normal derivatives for {} interface vertices",
            u1_normal.len(),
            dom.interface.len()
        )));
    }
    let h = dom.params.h();
    let normals = dom.vertex_normals();
    let arc = dom.arclength();
    let mut samples = Vec::new();
    let mut weights = Vec::new();
    let mut skipped = 0;
    let nv = dom.interface.len();
    for v in 0..nv {
        let p = dom.interface[v];
        let g = match &problem.dirichlet {
            DirichletData::Vertices(vals) => vals[v],
            DirichletData::Function(f) => f(p),
        };
        let nrm = normals[v];
        let mut got = None;
        for mult in [2.0, 3.0] {
            let d = mult * h;
            let q1 = [p[0] + d * nrm[0], p[1] + d * nrm[1]];
            let q2 = [p[0] + 2.0 * d * nrm[0], p[1] + 2.0 * d * nrm[1]];
            let inside = |q: [f64; 2]| q.iter().all(|c| *c >= dom.params.a && *c <= dom.params.a + 1.0);
            if !(inside(q1) && inside(q2)) {
                continue;
            }
            if let (Some(u1), Some(u2)) = (sol.interpolate(q1), sol.interpolate(q2)) {
                got = Some((-3.0 * g + 4.0 * u1 - u2) / (2.0 * d));
                break;
            }
        }
        match got {
            Some(dn) => {
                samples.push((arc[v], dn - u1_normal[v]));
                let left = if v > 0 { arc[v] - arc[v - 1] } else { 0.0 };
                let right = if v + 1 < nv { arc[v + 1] - arc[v] } else { 0.0 };
                weights.push(0.5 * (left + right));
            }
            None => skipped += 1,
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyRegion("extra residual could not be evaluated at any vertex".into()));
    }
    let sup = samples.iter().map(|s| s.1.abs()).fold(0.0, f64::max);
    let wsum: f64 = weights.iter().sum();
    let l2 = if wsum > 0.0 {
        (samples.iter().zip(&weights).map(|(s, w)| w * s.1 * s.1).sum::<f64>()).sqrt()
    } else {
        sup
    };
    Ok(ExtraResidual { sup, l2, samples, skipped })
}
