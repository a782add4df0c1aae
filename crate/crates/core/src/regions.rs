//! Region labels from the rank of the discrete Hessian, and the interface
//! between the bunching and customization regions.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{hessian_with, ScalarField};
use crate::par::Exec;
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Excluded,
    BluntBunch,
    /// Targeted bunching above the diagonal (`x2 > x1`).
    TargetedMinus,
    /// Targeted bunching below the diagonal.
    TargetedPlus,
    Customized,
}

impl Region {
    pub const ALL: [Region; 5] = [
        Region::Excluded,
        Region::BluntBunch,
        Region::TargetedMinus,
        Region::TargetedPlus,
        Region::Customized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Excluded => "excluded",
            Region::BluntBunch => "blunt_bunch",
            Region::TargetedMinus => "targeted_minus",
            Region::TargetedPlus => "targeted_plus",
            Region::Customized => "customized",
        }
    }

    /// Label under the reflection `x1 <-> x2`.
    pub fn mirrored(self) -> Region {
        match self {
            Region::TargetedMinus => Region::TargetedPlus,
            Region::TargetedPlus => Region::TargetedMinus,
            r => r,
        }
    }

    pub fn is_bunching(self) -> bool {
        matches!(self, Region::BluntBunch | Region::TargetedMinus | Region::TargetedPlus)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Region::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown region label {s:?}")))
    }
}

/// Default half-width of the cone around the anti-diagonal in which a null
/// direction counts as blunt bunching.
pub const DEFAULT_ANGLE_DEG: f64 = 10.0;
/// Smallest Hessian eigenvalue counted as full rank.
pub const DEFAULT_RANK_TOL: f64 = 0.3;
/// Largest `|u|` counted as excluded.
pub const DEFAULT_ZERO_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub params: ModelParams,
    pub labels: Vec<Region>,
    pub rank_tol: f64,
    pub zero_tol: f64,
}

impl RegionMap {
    pub fn from_labels(params: ModelParams, labels: Vec<Region>, rank_tol: f64, zero_tol: f64) -> Result<Self> {
        if labels.len() != params.n * params.n {
            return invalid(format!("expected {} labels, got {}", params.n * params.n, labels.len()));
        }
        Ok(RegionMap { params, labels, rank_tol, zero_tol })
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn get(&self, i: usize, j: usize) -> Region {
        self.labels[i * self.params.n + j]
    }

    pub fn count(&self, r: Region) -> usize {
        self.labels.iter().filter(|&&l| l == r).count()
    }

    pub fn fraction(&self, r: Region) -> f64 {
        self.count(r) as f64 / self.labels.len() as f64
    }

    /// Fraction of nodes whose labels differ between two maps on the same grid.
    pub fn disagreement(&self, other: &RegionMap) -> f64 {
        let diff = self.labels.iter().zip(&other.labels).filter(|(a, b)| a != b).count();
        diff as f64 / self.labels.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.n();
        writeln!(w, "x1,x2,label")?;
        for i in 0..n {
            for j in 0..n {
                let (x1, x2) = (self.params.coord(i), self.params.coord(j));
                writeln!(w, "{x1:.16e},{x2:.16e},{}", self.get(i, j))?;
            }
        }
        Ok(())
    }
}

fn check_tol(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} must be positive, got {v}"))
    }
}

pub fn classify(u: &ScalarField, rank_tol: f64, zero_tol: f64) -> Result<RegionMap> {
    classify_with(Exec::default(), u, rank_tol, zero_tol, DEFAULT_ANGLE_DEG)
}

/// Labels every node: excluded where `|u| <= zero_tol`, customized where both
/// Hessian eigenvalues exceed `rank_tol`, otherwise a bunching label decided
/// by the direction of the near-null eigenvector.
pub fn classify_with(exec: Exec, u: &ScalarField, rank_tol: f64, zero_tol: f64, angle_deg: f64) -> Result<RegionMap> {
    check_tol("rank_tol", rank_tol)?;
    check_tol("zero_tol", zero_tol)?;
    if !(angle_deg > 0.0 && angle_deg < 90.0) {
        return invalid(format!("angle window must lie in (0, 90) degrees, got {angle_deg}"));
    }
    let n = u.n();
    let hess = hessian_with(exec, u);
    let cos_window = angle_deg.to_radians().cos();
    let labels = exec.map(n * n, |k| {
        if u.values[k].abs() <= zero_tol {
            return Region::Excluded;
        }
        let (lo, _, v) = hess[k].eigen();
        if lo > rank_tol {
            return Region::Customized;
        }
        let along_anti = (v[0] - v[1]).abs() * std::f64::consts::FRAC_1_SQRT_2;
        let (i, j) = (k / n, k % n);
        if along_anti >= cos_window || i == j {
            Region::BluntBunch
        } else if j > i {
            Region::TargetedMinus
        } else {
            Region::TargetedPlus
        }
    });
    RegionMap::from_labels(u.params, labels, rank_tol, zero_tol)
}

/// Samples `(s, t)` of the interface `x1 + x2 = t(s)`, `s = x1 - x2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceCurve {
    pub samples: Vec<(f64, f64)>,
}

impl InterfaceCurve {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyRegion("interface has no samples".into()));
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return invalid("interface samples must have strictly increasing s");
        }
        if samples.iter().any(|(s, t)| !s.is_finite() || !t.is_finite()) {
            return invalid("interface samples must be finite");
        }
        Ok(InterfaceCurve { samples })
    }

    pub fn t_min(&self) -> f64 {
        self.samples.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
    }

    pub fn t_max(&self) -> f64 {
        self.samples.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Piecewise-linear `t(s)`, constant beyond the end samples.
    pub fn eval(&self, s: f64) -> f64 {
        let p = &self.samples;
        if s <= p[0].0 {
            return p[0].1;
        }
        if s >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let k = p.partition_point(|q| q.0 <= s);
        let (s0, t0) = p[k - 1];
        let (s1, t1) = p[k];
        t0 + (t1 - t0) * (s - s0) / (s1 - s0)
    }

    /// Largest `|t(s) - t(-s)|` over the samples.
    pub fn asymmetry(&self) -> f64 {
        self.samples
            .iter()
            .map(|&(s, t)| (t - self.eval(-s)).abs())
            .fold(0.0, f64::max)
    }

    /// The samples as points `(x1, x2)` of the square.
    pub fn points(&self) -> Vec<[f64; 2]> {
        self.samples.iter().map(|&(s, t)| [0.5 * (t + s), 0.5 * (t - s)]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,t")?;
        for (s, t) in &self.samples {
            writeln!(w, "{s:.16e},{t:.16e}")?;
        }
        Ok(())
    }

    /// Reads `s,t` rows, or `x1,x2` rows which are converted.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty interface file".into()))??;
        let cartesian = match header.trim().replace(' ', "").as_str() {
            "s,t" => false,
            "x1,x2" => true,
            h => return Err(Error::Parse(format!("interface header must be `s,t` or `x1,x2`, got {h:?}"))),
        };
        let mut samples = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("interface row {}: {e}", k + 2)))?;
            if vals.len() != 2 {
                return Err(Error::Parse(format!("interface row {} has {} columns", k + 2, vals.len())));
            }
            samples.push(if cartesian { (vals[0] - vals[1], vals[0] + vals[1]) } else { (vals[0], vals[1]) });
        }
        samples.sort_by(|p, q| p.0.total_cmp(&q.0));
        InterfaceCurve::new(samples)
    }
}

/// For each anti-diagonal slice holding both customized and other nodes,
/// `t(s)` sits just above the largest `x1 + x2` of a non-customized node on
/// the slice (halfway to the following customized node).
pub fn extract_interface(map: &RegionMap) -> Result<InterfaceCurve> {
    if !map.labels.contains(&Region::Customized) {
        return Err(Error::EmptyRegion("no customized nodes".into()));
    }
    if !map.labels.iter().any(|r| r.is_bunching()) {
        return Err(Error::EmptyRegion("no bunching nodes".into()));
    }
    let n = map.n() as isize;
    let h = map.params.h();
    let a = map.params.a;
    let mut samples = Vec::new();
    for k in -(n - 1)..n {
        let mut top: Option<isize> = None;
        let mut above_customized = false;
        let mut has_customized = false;
        // Nodes (i, j) with i - j = k, ordered by i + j.
        let j0 = (-k).max(0);
        let j1 = (n - 1 - k).min(n - 1);
        for j in j0..=j1 {
            let i = j + k;
            if map.get(i as usize, j as usize) == Region::Customized {
                has_customized = true;
                above_customized = true;
            } else {
                top = Some(i + j);
                above_customized = false;
            }
        }
        if let (Some(sum), true) = (top, has_customized) {
            // Nodes on a slice are 2h apart in t; place the interface midway
            // to the next (customized) node.
            let mid = if above_customized { 1.0 } else { 0.0 };
            samples.push((k as f64 * h, 2.0 * a + (sum as f64 + mid) * h));
        }
    }
    InterfaceCurve::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::BluntProfile;

    fn params(n: usize) -> ModelParams {
        ModelParams::new(1.0, n, 1e-9).unwrap()
    }

    #[test]
    fn zero_field_is_excluded() {
        let m = classify(&ScalarField::zeros(params(16)), 0.3, 1e-7).unwrap();
        assert_eq!(m.count(Region::Excluded), 256);
    }

    #[test]
    fn strictly_convex_is_customized() {
        let u = ScalarField::from_fn(params(24), |x, y| 0.75 * (x * x + y * y));
        let m = classify(&u, 0.3, 1e-7).unwrap();
        assert_eq!(m.count(Region::Customized), 24 * 24);
    }

    #[test]
    fn blunt_profile_splits_into_excluded_and_blunt() {
        let p = params(40);
        let prof = BluntProfile::new(1.0);
        let u = ScalarField::from_fn(p, |x, y| prof.clipped(x + y));
        let m = classify(&u, 0.3, 1e-9).unwrap();
        let h = p.h();
        for i in 0..40 {
            for j in 0..40 {
                let t = p.coord(i) + p.coord(j);
                // The Hessian stencil straddles the kink within 2h of t05.
                if (t - prof.t05).abs() < 2.5 * h {
                    continue;
                }
                let want = if t < prof.t05 { Region::Excluded } else { Region::BluntBunch };
                assert_eq!(m.get(i, j), want, "node ({i},{j}) t={t}");
            }
        }
    }

    #[test]
    fn labels_mirror_under_transpose() {
        let p = params(32);
        let u = ScalarField::from_fn(p, |x, y| ((x - 1.3).max(0.0)).powi(2) + 0.2 * (x + y - 2.2).max(0.0).powi(2));
        let m = classify(&u, 0.05, 1e-9).unwrap();
        let mt = classify(&u.transpose(), 0.05, 1e-9).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                assert_eq!(m.get(i, j).mirrored(), mt.get(j, i));
            }
        }
    }

    #[test]
    fn constant_strip_map_gives_flat_interface() {
        let p = params(64);
        let (t05, t15) = crate::closed_form::strip_bounds(1.0);
        let n = p.n;
        let labels = (0..n * n)
            .map(|k| {
                let t = p.coord(k / n) + p.coord(k % n);
                if t <= t05 {
                    Region::Excluded
                } else if t <= t15 {
                    Region::BluntBunch
                } else {
                    Region::Customized
                }
            })
            .collect();
        let map = RegionMap::from_labels(p, labels, 0.3, 1e-7).unwrap();
        let curve = extract_interface(&map).unwrap();
        for &(_, t) in &curve.samples {
            assert!((t - t15).abs() <= p.h() + 1e-12, "t={t}");
        }
        assert!(curve.asymmetry() < 1e-12);
    }

    #[test]
    fn interface_requires_customized_nodes() {
        let map = RegionMap::from_labels(params(16), vec![Region::BluntBunch; 256], 0.3, 1e-7).unwrap();
        assert!(matches!(extract_interface(&map), Err(Error::EmptyRegion(_))));
    }

    #[test]
    fn curve_csv_round_trip() {
        let c = InterfaceCurve::new(vec![(-0.5, 2.8), (0.0, 2.6), (0.5, 2.8)]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(InterfaceCurve::read_csv(&buf[..]).unwrap(), c);
        assert!((c.eval(0.25) - 2.7).abs() < 1e-15);
    }

    #[test]
    fn region_labels_parse() {
        for r in Region::ALL {
            assert_eq!(r.as_str().parse::<Region>().unwrap(), r);
        }
        assert!("omega".parse::<Region>().is_err());
    }
}
