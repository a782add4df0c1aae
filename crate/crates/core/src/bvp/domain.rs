//! The customization region: the part of the square above an interface
//! polyline that runs from the left edge to the bottom edge.

use crate::error::{invalid, Result};
use crate::euler_lagrange::segments_cross;
use crate::params::ModelParams;
use crate::regions::InterfaceCurve;

/// Nodes closer than this to the interface count as interface nodes.
const ON_INTERFACE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonalDomain {
    pub params: ModelParams,
    /// Interface vertices, from the left edge (`x1 = a`) to the bottom edge
    /// (`x2 = a`).
    pub interface: Vec<[f64; 2]>,
    /// `true` for grid nodes strictly inside the region.
    pub mask: Vec<bool>,
}

impl PolygonalDomain {
    pub fn new(params: ModelParams, interface: Vec<[f64; 2]>) -> Result<Self> {
        params.validate()?;
        let (lo, hi) = (params.a, params.a + 1.0);
        let eps = 1e-9;
        if interface.len() < 2 {
            return invalid("interface needs at least two vertices");
        }
        if interface.iter().flatten().any(|c| !c.is_finite() || *c < lo - eps || *c > hi + eps) {
            return invalid("interface vertices must lie in the square");
        }
        let first = interface[0];
        let last = interface[interface.len() - 1];
        if (first[0] - lo).abs() > eps {
            return invalid(format!("interface must start on the left edge, starts at ({}, {})", first[0], first[1]));
        }
        if (last[1] - lo).abs() > eps {
            return invalid(format!("interface must end on the bottom edge, ends at ({}, {})", last[0], last[1]));
        }
        let interface: Vec<[f64; 2]> = interface.into_iter().map(|p| [p[0].clamp(lo, hi), p[1].clamp(lo, hi)]).collect();
        let k = interface.len() - 1;
        for s in 0..k {
            for t in (s + 2)..k {
                if segments_cross(interface[s], interface[s + 1], interface[t], interface[t + 1]) {
                    return invalid(format!("interface segments {s} and {t} cross"));
                }
            }
        }
        let mut dom = PolygonalDomain { params, interface, mask: Vec::new() };
        let n = params.n;
        dom.mask = (0..n * n)
            .map(|q| {
                let x = [params.coord(q / n), params.coord(q % n)];
                dom.contains(x) && dom.distance(x) > ON_INTERFACE
            })
            .collect();
        Ok(dom)
    }

    /// Straight interface `x1 + x2 = t` (for `2a < t <= 2a + 1`), with
    /// vertices about one grid spacing apart.
    pub fn straight(params: ModelParams, t: f64) -> Result<Self> {
        let a = params.a;
        if !(t > 2.0 * a && t <= 2.0 * a + 1.0) {
            return invalid(format!("straight interface needs 2a < t <= 2a+1, got {t}"));
        }
        let len = t - 2.0 * a;
        let m = ((len / params.h()).ceil() as usize).max(1);
        let pts = (0..=m).map(|k| {
            let s = len * k as f64 / m as f64;
            [a + s, t - a - s]
        });
        PolygonalDomain::new(params, pts.collect())
    }

    /// Interface through the samples of `curve`, extended along the
    /// anti-diagonal slices (or horizontally/vertically when the slice
    /// leaves the square) to reach the left and bottom edges.
    pub fn from_curve(params: ModelParams, curve: &InterfaceCurve) -> Result<Self> {
        let a = params.a;
        let top = a + 1.0;
        let mut pts = curve.points();
        let first = pts[0];
        if first[0] > a + 1e-12 {
            let t = first[0] + first[1];
            let edge = if t - a <= top { [a, t - a] } else { [a, first[1]] };
            pts.insert(0, edge);
        }
        let last = pts[pts.len() - 1];
        if last[1] > a + 1e-12 {
            let t = last[0] + last[1];
            let edge = if t - a <= top { [t - a, a] } else { [last[0], a] };
            pts.push(edge);
        }
        PolygonalDomain::new(params, pts)
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn node_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Closed polygon of the complement (the corner at `(a, a)` plus the
    /// interface).
    fn lower_polygon(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let corner = [self.params.a, self.params.a];
        let k = self.interface.len();
        (0..=k).map(move |e| {
            let p = if e == 0 { corner } else { self.interface[e - 1] };
            let q = if e == k { corner } else { self.interface[e] };
            (p, q)
        })
    }

    /// Is `x` (a point of the square) on the region's side of the interface?
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let mut inside_lower = false;
        for (p, q) in self.lower_polygon() {
            if (p[1] > x[1]) != (q[1] > x[1]) {
                let cross_x = p[0] + (x[1] - p[1]) * (q[0] - p[0]) / (q[1] - p[1]);
                if x[0] < cross_x {
                    inside_lower = !inside_lower;
                }
            }
        }
        !inside_lower
    }

    /// Distance from `x` to the interface polyline.
    pub fn distance(&self, x: [f64; 2]) -> f64 {
        self.interface
            .windows(2)
            .map(|w| project_on_segment(x, w[0], w[1]).1)
            .fold(f64::INFINITY, f64::min)
    }

    /// First crossing of the interface on the way from `p` to `q`: returns
    /// `(fraction of the way, segment index, position along the segment)`.
    pub fn crossing(&self, p: [f64; 2], q: [f64; 2]) -> Option<(f64, usize, f64)> {
        let d = [q[0] - p[0], q[1] - p[1]];
        let eps = 1e-12;
        let mut best: Option<(f64, usize, f64)> = None;
        for (k, w) in self.interface.windows(2).enumerate() {
            let e = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let den = d[0] * e[1] - d[1] * e[0];
            if den.abs() < 1e-300 {
                continue;
            }
            let r = [w[0][0] - p[0], w[0][1] - p[1]];
            let t = (r[0] * e[1] - r[1] * e[0]) / den;
            let s = (r[0] * d[1] - r[1] * d[0]) / den;
            if t > 0.0 && t <= 1.0 + eps && (-eps..=1.0 + eps).contains(&s) && best.is_none_or(|b| t < b.0) {
                best = Some((t.min(1.0), k, s.clamp(0.0, 1.0)));
            }
        }
        best.or_else(|| {
            // `q` sits on the interface up to rounding.
            let (k, (s, dist)) = self
                .interface
                .windows(2)
                .map(|w| project_on_segment(q, w[0], w[1]))
                .enumerate()
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
            (dist <= 1e-9).then_some((1.0, k, s))
        })
    }

    /// Unit normals at the vertices pointing into the region (averaged from
    /// the adjacent segments).
    pub fn vertex_normals(&self) -> Vec<[f64; 2]> {
        let seg: Vec<[f64; 2]> = self
            .interface
            .windows(2)
            .map(|w| {
                let e = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
                let len = e[0].hypot(e[1]).max(1e-300);
                // Walking from the left edge to the bottom edge, the region
                // lies to the left.
                [-e[1] / len, e[0] / len]
            })
            .collect();
        let k = self.interface.len();
        (0..k)
            .map(|v| {
                let (a, b) = (seg[v.saturating_sub(1)], seg[v.min(k - 2)]);
                let s = [a[0] + b[0], a[1] + b[1]];
                let len = s[0].hypot(s[1]).max(1e-300);
                [s[0] / len, s[1] / len]
            })
            .collect()
    }

    /// Arclength of each vertex from the left-edge end.
    pub fn arclength(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        for w in self.interface.windows(2) {
            let last = out[out.len() - 1];
            out.push(last + (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]));
        }
        out
    }
}

/// Position along `[p, q]` of the closest point to `x`, and the distance.
fn project_on_segment(x: [f64; 2], p: [f64; 2], q: [f64; 2]) -> (f64, f64) {
    let e = [q[0] - p[0], q[1] - p[1]];
    let len2 = e[0] * e[0] + e[1] * e[1];
    let s = if len2 > 0.0 {
        (((x[0] - p[0]) * e[0] + (x[1] - p[1]) * e[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let c = [p[0] + s * e[0], p[1] + s * e[1]];
    (s, (x[0] - c[0]).hypot(x[1] - c[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize) -> ModelParams {
        ModelParams::new(1.0, n, 1e-9).unwrap()
    }

    #[test]
    fn straight_mask_matches_half_plane() {
        let p = params(33);
        let t = 2.0 + 6f64.sqrt() / 3.0;
        let d = PolygonalDomain::straight(p, t).unwrap();
        for i in 0..33 {
            for j in 0..33 {
                let s = p.coord(i) + p.coord(j);
                assert_eq!(d.mask[i * 33 + j], s > t + 1e-9, "({i},{j})");
            }
        }
    }

    #[test]
    fn normals_point_into_region() {
        let d = PolygonalDomain::straight(params(16), 2.5).unwrap();
        for v in d.vertex_normals() {
            assert!((v[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
            assert!((v[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
    }

    #[test]
    fn crossing_along_grid_line() {
        let d = PolygonalDomain::straight(params(16), 2.5).unwrap();
        let (t, k, s) = d.crossing([1.5, 1.2], [1.1, 1.2]).unwrap();
        assert!((t - 0.5).abs() < 1e-12);
        let w = [d.interface[k], d.interface[k + 1]];
        let hit = [w[0][0] + s * (w[1][0] - w[0][0]), w[0][1] + s * (w[1][1] - w[0][1])];
        assert!((hit[0] - 1.3).abs() < 1e-12 && (hit[1] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_interfaces() {
        let p = params(16);
        assert!(PolygonalDomain::new(p, vec![[1.2, 1.5], [1.5, 1.0]]).is_err());
        assert!(PolygonalDomain::new(p, vec![[1.0, 1.5], [1.5, 1.2]]).is_err());
        let zigzag = vec![[1.0, 1.5], [1.6, 1.1], [1.6, 1.4], [1.1, 1.1], [1.3, 1.0]];
        assert!(PolygonalDomain::new(p, zigzag).is_err());
    }

    #[test]
    fn curve_is_extended_to_edges() {
        let p = params(16);
        let c = InterfaceCurve::new(vec![(-0.5, 2.8), (0.0, 2.6), (0.5, 2.8)]).unwrap();
        let d = PolygonalDomain::from_curve(p, &c).unwrap();
        assert_eq!(d.interface.first().unwrap()[0], 1.0);
        assert_eq!(d.interface.last().unwrap()[1], 1.0);
    }
}
