//! Minimal SVG output: filled cells, polylines and a color ramp.

use std::fmt::Write as _;

use crate::grid::ScalarField;
use crate::pricing::ProductIntensity;
use crate::regions::{InterfaceCurve, Region, RegionMap};

const SIZE: f64 = 512.0;
const MARGIN: f64 = 16.0;

/// An SVG canvas mapping the data box `[x0, x0 + w] x [y0, y0 + w]` onto a
/// square, with the y axis pointing up.
pub struct Canvas {
    x0: f64,
    y0: f64,
    w: f64,
    body: String,
}

impl Canvas {
    pub fn new(x0: f64, y0: f64, w: f64) -> Self {
        Canvas { x0, y0, w, body: String::new() }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let s = SIZE / self.w;
        (MARGIN + (x - self.x0) * s, MARGIN + SIZE - (y - self.y0) * s)
    }

    /// Axis-aligned cell with lower-left corner `(x, y)` and side `d`.
    pub fn cell(&mut self, x: f64, y: f64, d: f64, fill: &str) {
        let (px, py) = self.px(x, y + d);
        let side = d * SIZE / self.w;
        let _ = writeln!(
            self.body,
            r#"<rect x="{px:.2}" y="{py:.2}" width="{side:.2}" height="{side:.2}" fill="{fill}" stroke="none"/>"#
        );
    }

    pub fn polyline(&mut self, pts: &[[f64; 2]], stroke: &str, width: f64) {
        if pts.len() < 2 {
            return;
        }
        let mut coords = String::new();
        for p in pts {
            let (x, y) = self.px(p[0], p[1]);
            let _ = write!(coords, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            coords.trim_end()
        );
    }

    pub fn finish(self) -> String {
        let total = SIZE + 2.0 * MARGIN;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        out.push_str(&self.body);
        let (x, y) = (MARGIN, MARGIN);
        let _ = writeln!(out, r#"<rect x="{x}" y="{y}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#);
        out.push_str("</svg>\n");
        out
    }
}

/// Viridis-like ramp on `[0, 1]`.
pub fn ramp(v: f64) -> String {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let x = v * (STOPS.len() - 1) as f64;
    let k = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - k as f64;
    let c: Vec<u8> = (0..3).map(|i| (STOPS[k][i] + f * (STOPS[k + 1][i] - STOPS[k][i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

pub fn region_color(r: Region) -> &'static str {
    match r {
        Region::Excluded => "#f0f0f0",
        Region::BluntBunch => "#d62728",
        Region::TargetedMinus => "#ff7f0e",
        Region::TargetedPlus => "#ffbb78",
        Region::Customized => "#1f77b4",
    }
}

fn grid_canvas(a: f64) -> Canvas {
    Canvas::new(a, a, 1.0)
}

/// One cell per node, colored by label, with the interface drawn on top.
pub fn regions_svg(map: &RegionMap, interface: Option<&InterfaceCurve>) -> String {
    let p = map.params;
    let h = p.h();
    let mut c = grid_canvas(p.a);
    for i in 0..p.n {
        for j in 0..p.n {
            c.cell(p.coord(i) - 0.5 * h, p.coord(j) - 0.5 * h, h, region_color(map.get(i, j)));
        }
    }
    if let Some(curve) = interface {
        c.polyline(&curve.points(), "black", 2.0);
    }
    c.finish()
}

/// Heat map of a field with optional polyline overlays.
pub fn field_svg(u: &ScalarField, overlays: &[Vec<[f64; 2]>]) -> String {
    let p = u.params;
    let h = p.h();
    let (lo, hi) = (u.min(), u.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut c = grid_canvas(p.a);
    for i in 0..p.n {
        for j in 0..p.n {
            c.cell(p.coord(i) - 0.5 * h, p.coord(j) - 0.5 * h, h, &ramp((u.get(i, j) - lo) / span));
        }
    }
    for pts in overlays {
        c.polyline(pts, "white", 1.5);
    }
    c.finish()
}

/// Product intensity on a square-root scale so the 1-D concentration and the
/// 2-D spread are both visible.
pub fn intensity_svg(p: &ProductIntensity) -> String {
    let d = p.y_max / p.bins as f64;
    let top = p.mass.iter().copied().fold(0.0, f64::max).sqrt();
    let top = if top > 0.0 { top } else { 1.0 };
    let mut c = Canvas::new(0.0, 0.0, p.y_max);
    for i in 0..p.bins {
        for j in 0..p.bins {
            c.cell(i as f64 * d, j as f64 * d, d, &ramp(p.get(i, j).sqrt() / top));
        }
    }
    c.finish()
}
