//! The seller's side: prices as the convex conjugate of the indirect
//! utility, and the distribution of products actually sold.

use std::io::Write;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::grid::{gradient_with, trapezoid_weights, ScalarField};
use crate::par::{compensated_sum, Exec};

/// Prices `v(y) = max_x (x . y - u(x))` on a uniform `m x m` product grid
/// over `[0, y_max]^2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceMenu {
    pub y_max: f64,
    pub m: usize,
    /// `values[i * m + j]` is the price of `(y_i, y_j)`.
    pub values: Vec<f64>,
}

impl PriceMenu {
    pub fn coord(&self, i: usize) -> f64 {
        self.y_max * i as f64 / (self.m - 1) as f64
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    /// Writes `y1,y2,price` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "y1,y2,price")?;
        for i in 0..self.m {
            for j in 0..self.m {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", self.coord(i), self.coord(j), self.get(i, j))?;
            }
        }
        Ok(())
    }

    /// Smallest coordinatewise forward difference; nonnegative for a
    /// nondecreasing menu.
    pub fn min_increment(&self) -> f64 {
        let m = self.m;
        let mut worst = f64::INFINITY;
        for i in 0..m {
            for j in 0..m {
                if i + 1 < m {
                    worst = worst.min(self.get(i + 1, j) - self.get(i, j));
                }
                if j + 1 < m {
                    worst = worst.min(self.get(i, j + 1) - self.get(i, j));
                }
            }
        }
        worst
    }

    /// Smallest second difference along the axes and both diagonals;
    /// nonnegative up to rounding for a sampled convex function.
    pub fn min_second_difference(&self) -> f64 {
        let m = self.m as isize;
        let mut worst = f64::INFINITY;
        for (di, dj) in [(1, 0), (0, 1), (1, 1), (1, -1)] {
            for i in 0..m {
                for j in 0..m {
                    let (lo, hi) = ((i - di, j - dj), (i + di, j + dj));
                    if [lo.0, lo.1, hi.0, hi.1].iter().all(|&k| (0..m).contains(&k)) {
                        let g = |p: (isize, isize)| self.get(p.0 as usize, p.1 as usize);
                        worst = worst.min(g(lo) - 2.0 * g((i, j)) + g(hi));
                    }
                }
            }
        }
        worst
    }
}

pub fn price_menu(u: &ScalarField, y_max: f64, m: usize) -> Result<PriceMenu> {
    price_menu_with(Exec::default(), u, y_max, m)
}

/// Exact discrete Legendre transform: every product node takes the max over
/// every type node.
pub fn price_menu_with(exec: Exec, u: &ScalarField, y_max: f64, m: usize) -> Result<PriceMenu> {
    if !(y_max > 0.0 && y_max.is_finite()) {
        return invalid(format!("y_max must be positive, got {y_max}"));
    }
    if m < 2 {
        return invalid(format!("product grid needs at least 2 points per side, got {m}"));
    }
    let n = u.n();
    let xs: Vec<f64> = (0..n).map(|i| u.params.coord(i)).collect();
    let mut menu = PriceMenu { y_max, m, values: vec![0.0; m * m] };
    let ys: Vec<f64> = (0..m).map(|i| menu.coord(i)).collect();
    menu.values = exec.map(m * m, |q| {
        let (y1, y2) = (ys[q / m], ys[q % m]);
        let mut best = f64::NEG_INFINITY;
        for (i, x1) in xs.iter().enumerate() {
            let row = &u.values[i * n..(i + 1) * n];
            for (x2, uv) in xs.iter().zip(row) {
                best = best.max(x1 * y1 + x2 * y2 - uv);
            }
        }
        best
    });
    // The null product is the outside option. When u reaches zero up to the
    // exclusion tolerance its price is zero, not the rounding left in min u.
    if u.min().abs() <= EXCLUSION_TOL {
        menu.values[0] = 0.0;
    }
    Ok(menu)
}

/// `u**(x) = max_y (x . y - v(y))` over the product grid, at every type node.
pub fn double_conjugate(exec: Exec, u: &ScalarField, menu: &PriceMenu) -> ScalarField {
    let params = u.params;
    let n = params.n;
    let m = menu.m;
    let ys: Vec<f64> = (0..m).map(|i| menu.coord(i)).collect();
    let values = exec.map(n * n, |q| {
        let (x1, x2) = (params.coord(q / n), params.coord(q % n));
        let mut best = f64::NEG_INFINITY;
        for (i, y1) in ys.iter().enumerate() {
            for (j, y2) in ys.iter().enumerate() {
                best = best.max(x1 * y1 + x2 * y2 - menu.values[i * m + j]);
            }
        }
        best
    });
    ScalarField { params, values }
}

/// Largest `u - u**`. Always `>= 0` up to rounding since `u** <= u` on the
/// type grid; small when `u` is convex with slopes inside the product grid.
pub fn double_conjugate_gap(exec: Exec, u: &ScalarField, menu: &PriceMenu) -> f64 {
    let back = double_conjugate(exec, u, menu);
    u.values.iter().zip(&back.values).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max)
}

/// Share of consumers buying from each product bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductIntensity {
    pub y_max: f64,
    pub bins: usize,
    /// `mass[i * bins + j]` for the bin `[y_i, y_i+1) x [y_j, y_j+1)`.
    pub mass: Vec<f64>,
}

impl ProductIntensity {
    pub fn total(&self) -> f64 {
        compensated_sum(self.mass.iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.bins + j]
    }

    /// Writes `y1_lo,y2_lo,y1_hi,y2_hi,mass` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.y_max / self.bins as f64;
        writeln!(w, "y1_lo,y2_lo,y1_hi,y2_hi,mass")?;
        for i in 0..self.bins {
            for j in 0..self.bins {
                let (a, b) = (i as f64 * d, j as f64 * d);
                writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", a, b, a + d, b + d, self.get(i, j))?;
            }
        }
        Ok(())
    }
}

/// Largest `|u|` treated as the outside option when binning.
pub const EXCLUSION_TOL: f64 = 1e-7;

pub fn product_intensity(u: &ScalarField, bins: usize, y_max: f64) -> Result<ProductIntensity> {
    product_intensity_with(Exec::default(), u, bins, y_max)
}

/// Pushes the uniform (trapezoid-weighted) type measure forward under the
/// discrete gradient map. Excluded types land in the origin bin; gradients
/// outside `[0, y_max]^2` are clamped into the border bins.
pub fn product_intensity_with(exec: Exec, u: &ScalarField, bins: usize, y_max: f64) -> Result<ProductIntensity> {
    if bins == 0 {
        return invalid("intensity needs at least one bin");
    }
    if !(y_max > 0.0 && y_max.is_finite()) {
        return invalid(format!("y_max must be positive, got {y_max}"));
    }
    let n = u.n();
    let g = gradient_with(exec, u);
    let w = trapezoid_weights(n);
    let area = compensated_sum((0..n * n).map(|q| w[q / n] * w[q % n]));
    let bin = |y: f64| ((y / y_max * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    let mut lists: Vec<Vec<f64>> = vec![Vec::new(); bins * bins];
    for q in 0..n * n {
        let (bi, bj) = if u.values[q].abs() <= EXCLUSION_TOL { (0, 0) } else { (bin(g.d1[q]), bin(g.d2[q])) };
        lists[bi * bins + bj].push(w[q / n] * w[q % n] / area);
    }
    let mass = lists.into_iter().map(compensated_sum).collect();
    Ok(ProductIntensity { y_max, bins, mass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;

    fn params(n: usize) -> ModelParams {
        ModelParams::new(1.0, n, 1e-9).unwrap()
    }

    #[test]
    fn zero_utility_prices_at_the_top_corner() {
        let u = ScalarField::zeros(params(16));
        let menu = price_menu(&u, 2.0, 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = 2.0 * (menu.coord(i) + menu.coord(j));
                assert!((menu.get(i, j) - want).abs() < 1e-12);
            }
        }
        assert_eq!(menu.get(0, 0), 0.0);
    }

    #[test]
    fn outside_option_is_free() {
        let u = ScalarField::from_fn(params(17), |x, y| (x + y - 2.5).max(0.0).powi(2));
        let menu = price_menu(&u, 2.0, 9).unwrap();
        assert_eq!(menu.get(0, 0), 0.0);
        assert!(menu.min_increment() >= 0.0);
        assert!(menu.min_second_difference() >= -1e-12);
    }

    #[test]
    fn rounding_in_the_excluded_region_does_not_price_the_outside_option() {
        let u = ScalarField::from_fn(params(17), |x, y| 2e-17 + (x + y - 2.5).max(0.0).powi(2));
        assert_eq!(price_menu(&u, 2.0, 9).unwrap().get(0, 0), 0.0);
        let u = ScalarField::from_fn(params(17), |x, y| 0.1 + (x + y - 2.5).max(0.0));
        assert!((price_menu(&u, 2.0, 9).unwrap().get(0, 0) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn matches_analytic_conjugate_of_quadratic() {
        // u = |x|^2 / 2 has v(y) = |y|^2 / 2 when y lies in the square.
        let u = ScalarField::from_fn(params(65), |x, y| 0.5 * (x * x + y * y));
        let menu = price_menu(&u, 2.0, 9).unwrap();
        for i in 4..9 {
            for j in 4..9 {
                let (y1, y2) = (menu.coord(i), menu.coord(j));
                assert!((menu.get(i, j) - 0.5 * (y1 * y1 + y2 * y2)).abs() < 1e-3);
            }
        }
        let gap = double_conjugate_gap(Exec::Sequential, &u, &price_menu(&u, 2.0, 65).unwrap());
        assert!((-1e-12..5e-3).contains(&gap), "{gap}");
    }

    #[test]
    fn schedules_agree() {
        let u = ScalarField::from_fn(params(17), |x, y| (x * y - 1.2).max(0.0));
        let a = price_menu_with(Exec::Sequential, &u, 2.0, 11).unwrap();
        let b = price_menu_with(Exec::Parallel, &u, 2.0, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_utility_puts_all_mass_at_origin() {
        let p = product_intensity(&ScalarField::zeros(params(17)), 8, 2.0).unwrap();
        assert!((p.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((p.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_gradient_spreads_mass_evenly() {
        // Du = x maps the unit square onto the product patch [1, 2]^2.
        let u = ScalarField::from_fn(params(101), |x, y| 0.5 * (x * x + y * y));
        let p = product_intensity(&u, 4, 2.0).unwrap();
        assert!((p.total() - 1.0).abs() < 1e-9);
        for i in 2..4 {
            for j in 2..4 {
                assert!((p.get(i, j) - 0.25).abs() < 0.02, "bin ({i},{j}) = {}", p.get(i, j));
            }
        }
        assert!(p.get(0, 0) + p.get(1, 1) < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        let u = ScalarField::zeros(params(16));
        assert!(price_menu(&u, 0.0, 5).is_err());
        assert!(price_menu(&u, 2.0, 1).is_err());
        assert!(product_intensity(&u, 0, 2.0).is_err());
    }
}
