//! Length-structured filament densities on the fixed `(y, l)` grid and the
//! friction coefficients built from their `l`-moments.

use std::fmt;
use std::io::Write;

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::config::{moment_lower_bound, moment_upper_bound, DensityDataBounds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Enters at `y = 0`, leaves at `y = 1`.
    Plus,
    /// Enters at `y = 1`, leaves at `y = 0`.
    Minus,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Plus => "plus",
            Family::Minus => "minus",
        })
    }
}

/// One family's density sampled on the uniform grid `[0,1] × [0, l_max]`.
/// Rows index `y`, columns index `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub values: Array2<f64>,
    pub l_max: f64,
    pub family: Family,
}

impl DensityGrid {
    pub fn zeros(n_y: usize, n_l: usize, l_max: f64, family: Family) -> Self {
        Self { values: Array2::zeros((n_y + 1, n_l + 1)), l_max, family }
    }

    pub fn from_fn(n_y: usize, n_l: usize, l_max: f64, family: Family, f: impl Fn(f64, f64) -> f64) -> Self {
        let dy = 1.0 / n_y as f64;
        let dl = l_max / n_l as f64;
        let values = Array2::from_shape_fn((n_y + 1, n_l + 1), |(i, k)| f(i as f64 * dy, k as f64 * dl));
        Self { values, l_max, family }
    }

    pub fn n_y(&self) -> usize {
        self.values.nrows() - 1
    }

    pub fn n_l(&self) -> usize {
        self.values.ncols() - 1
    }

    pub fn dy(&self) -> f64 {
        1.0 / self.n_y() as f64
    }

    pub fn dl(&self) -> f64 {
        self.l_max / self.n_l() as f64
    }

    pub fn y_nodes(&self) -> Vec<f64> {
        let dy = self.dy();
        (0..=self.n_y()).map(|i| i as f64 * dy).collect()
    }

    pub fn l_nodes(&self) -> Vec<f64> {
        let dl = self.dl();
        (0..=self.n_l()).map(|k| k as f64 * dl).collect()
    }

    pub fn same_nodes(&self, other: &DensityGrid) -> bool {
        self.values.dim() == other.values.dim() && self.l_max == other.l_max
    }

    /// Discrete `L²_{y,l}` norm (trapezoid weights).
    pub fn l2_norm(&self) -> f64 {
        weighted_sum_sq(&self.values, self.dy(), self.dl()).sqrt()
    }

    /// Discrete `L²` distance to a grid on the same nodes.
    pub fn l2_distance(&self, other: &DensityGrid) -> f64 {
        let diff = &self.values - &other.values;
        weighted_sum_sq(&diff, self.dy(), self.dl()).sqrt()
    }

    /// `∫∫ ρ dy dl` by the trapezoid rule.
    pub fn total_mass(&self) -> f64 {
        let (wy, wl) = (trapezoid_weights(self.n_y(), self.dy()), trapezoid_weights(self.n_l(), self.dl()));
        let mut m = 0.0;
        for ((i, k), v) in self.values.indexed_iter() {
            m += wy[i] * wl[k] * v;
        }
        m
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// CSV matrix: header row of `l` nodes, first column `y` nodes.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["y\\l".to_string()];
        header.extend(self.l_nodes().iter().map(|l| format!("{l}")));
        w.write_record(&header)?;
        for (i, y) in self.y_nodes().into_iter().enumerate() {
            let mut rec = vec![format!("{y}")];
            rec.extend(self.values.row(i).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn weighted_sum_sq(values: &Array2<f64>, dy: f64, dl: f64) -> f64 {
    let (ny, nl) = (values.nrows() - 1, values.ncols() - 1);
    let (wy, wl) = (trapezoid_weights(ny, dy), trapezoid_weights(nl, dl));
    let mut s = 0.0;
    for ((i, k), v) in values.indexed_iter() {
        s += wy[i] * wl[k] * v * v;
    }
    s
}

pub(crate) fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n + 1];
    w[0] = 0.5 * h;
    w[n] = 0.5 * h;
    w
}

/// `μ_j(y) = ∫ l^j ρ(y, l) dl` at every `y` node (trapezoid in `l`; second
/// order for densities smooth in `l`, exact only when `l^j ρ` is linear per cell).
pub fn moment(grid: &DensityGrid, j: i32) -> Vec<f64> {
    let wl = trapezoid_weights(grid.n_l(), grid.dl());
    let lj: Vec<f64> = grid.l_nodes().iter().map(|l| l.powi(j)).collect();
    grid.values
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(&wl).zip(&lj).map(|((v, w), l)| v * w * l).sum())
        .collect()
}

/// Per-`y` friction coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrictionCoefficients {
    pub mu1_plus: Vec<f64>,
    pub mu1_minus: Vec<f64>,
    pub mu3_plus: Vec<f64>,
    pub mu3_minus: Vec<f64>,
    pub c: Vec<f64>,
    pub d_plus: Vec<f64>,
    pub d_minus: Vec<f64>,
}

impl FrictionCoefficients {
    /// Coefficients given directly (moments left empty); used by solver tests.
    pub fn from_profiles(c: Vec<f64>, d_plus: Vec<f64>, d_minus: Vec<f64>) -> Self {
        Self { mu1_plus: vec![], mu1_minus: vec![], mu3_plus: vec![], mu3_minus: vec![], c, d_plus, d_minus }
    }

    pub fn n_y(&self) -> usize {
        self.c.len() - 1
    }

    pub fn min_c(&self) -> f64 {
        self.c.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_d_plus(&self) -> f64 {
        self.d_plus.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_d_minus(&self) -> f64 {
        self.d_minus.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `min(C, D⁺, D⁻)` over all nodes.
    pub fn min_coefficient(&self) -> f64 {
        self.min_c().min(self.min_d_plus()).min(self.min_d_minus())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("degenerate density: {family} family depleted at y node {y_node} (mu1 = {mu1:e} < {eps_mass:e})")]
    DegenerateDensity { y_node: usize, family: Family, mu1: f64, eps_mass: f64 },
    #[error("density grids do not share nodes")]
    GridMismatch,
}

/// `D± = D0 μ1± μ3± / (μ1⁺ + μ1⁻)` and `C = C0 μ1⁺ μ1⁻ / (μ1⁺ + μ1⁻)` per `y` node.
///
/// Fails at the first node where either family's first moment drops below
/// `eps_mass`: the force balance loses ellipticity there.
pub fn coefficients(
    rho_plus: &DensityGrid,
    rho_minus: &DensityGrid,
    c0: f64,
    d0: f64,
    eps_mass: f64,
) -> Result<FrictionCoefficients, DensityError> {
    if !rho_plus.same_nodes(rho_minus) {
        return Err(DensityError::GridMismatch);
    }
    let mu1_plus = moment(rho_plus, 1);
    let mu1_minus = moment(rho_minus, 1);
    let mu3_plus = moment(rho_plus, 3);
    let mu3_minus = moment(rho_minus, 3);

    for (i, (&mp, &mm)) in mu1_plus.iter().zip(&mu1_minus).enumerate() {
        // NaN also counts as depleted
        for (family, mu1) in [(Family::Plus, mp), (Family::Minus, mm)] {
            if !(mu1 >= eps_mass) || !(mu1 > 0.0) {
                return Err(DensityError::DegenerateDensity { y_node: i, family, mu1, eps_mass });
            }
        }
    }

    let n = mu1_plus.len();
    let mut c = Vec::with_capacity(n);
    let mut d_plus = Vec::with_capacity(n);
    let mut d_minus = Vec::with_capacity(n);
    for i in 0..n {
        let total = mu1_plus[i] + mu1_minus[i];
        c.push(c0 * mu1_plus[i] * mu1_minus[i] / total);
        d_plus.push(d0 * mu1_plus[i] * mu3_plus[i] / total);
        d_minus.push(d0 * mu1_minus[i] * mu3_minus[i] / total);
    }
    Ok(FrictionCoefficients { mu1_plus, mu1_minus, mu3_plus, mu3_minus, c, d_plus, d_minus })
}

/// Explicit bounds `(κ̲, κ̄)` on `C` and `D±` for densities that are at least
/// `α₀/2` on `l ≤ L̲/2`, at most `2β₀`, and supported in `[0, L̄]`.
///
/// `D⁺` grows with `μ1⁺` and `μ3⁺` and shrinks with `μ1⁻`; `C` grows with
/// both first moments. The extremes are taken at the corresponding ends of
/// the moment bounds.
pub fn ellipticity_bounds(bounds: &DensityDataBounds, c0: f64, d0: f64) -> (f64, f64) {
    let (m1_lo, m1_hi) = (moment_lower_bound(bounds, 1), moment_upper_bound(bounds, 1));
    let (m3_lo, m3_hi) = (moment_lower_bound(bounds, 3), moment_upper_bound(bounds, 3));
    let d_min = d0 * m1_lo * m3_lo / (m1_lo + m1_hi);
    let d_max = d0 * m1_hi * m3_hi / (m1_hi + m1_lo);
    let c_min = c0 * m1_lo / 2.0;
    let c_max = c0 * m1_hi / 2.0;
    (d_min.min(c_min), d_max.max(c_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_grid(n: usize, beta: f64, l_max: f64, family: Family) -> DensityGrid {
        DensityGrid::from_fn(n, n, l_max, family, |_, _| beta)
    }

    #[test]
    fn zero_density_has_zero_moments() {
        let g = DensityGrid::zeros(8, 8, 1.0, Family::Plus);
        assert!(moment(&g, 1).iter().all(|&m| m == 0.0));
        assert!(moment(&g, 3).iter().all(|&m| m == 0.0));
    }

    #[test]
    fn first_moment_of_constant_converges_at_second_order() {
        // ∫₀^L̄ β l dl = β L̄² / 2 is integrated exactly (integrand linear).
        let g = constant_grid(8, 2.0, 1.5, Family::Plus);
        for m in moment(&g, 1) {
            assert!((m - 2.0 * 1.5 * 1.5 / 2.0).abs() < 1e-13);
        }
        // third moment of ρ = l: ∫ l⁴ = 1/5 with O(Δl²) error
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let g = DensityGrid::from_fn(8, n, 1.0, Family::Plus, |_, l| l);
            errs.push((moment(&g, 3)[0] - 0.2).abs());
        }
        assert!(errs[0] < 1e-2);
        let order = (errs[1] / errs[2]).log2();
        assert!((order - 2.0).abs() < 0.05, "order {order}");
    }

    #[test]
    fn constant_densities_give_hand_values() {
        // β = 1, L̄ = 1: μ1 = 1/2, μ3 = 1/4 (μ3 up to quadrature error).
        let n = 512;
        let p = constant_grid(n, 1.0, 1.0, Family::Plus);
        let m = constant_grid(n, 1.0, 1.0, Family::Minus);
        let k = coefficients(&p, &m, 1.0, 1.0, 1e-8).unwrap();
        let tol = 2.0 / (n * n) as f64;
        for i in 0..=n {
            assert!((k.d_plus[i] - 0.125).abs() < tol);
            assert!((k.d_minus[i] - 0.125).abs() < tol);
            assert!((k.c[i] - 0.25).abs() < 1e-13);
        }
    }

    #[test]
    fn depleted_family_is_degenerate() {
        let p = constant_grid(8, 1.0, 1.0, Family::Plus);
        let m = DensityGrid::zeros(8, 8, 1.0, Family::Minus);
        let err = coefficients(&p, &m, 1.0, 1.0, 1e-6).unwrap_err();
        assert_eq!(err, DensityError::DegenerateDensity { y_node: 0, family: Family::Minus, mu1: 0.0, eps_mass: 1e-6 });
    }

    #[test]
    fn coefficients_are_homogeneous_of_degree_one() {
        let p = DensityGrid::from_fn(8, 16, 1.0, Family::Plus, |y, l| (1.0 + y) * (1.0 - l));
        let m = DensityGrid::from_fn(8, 16, 1.0, Family::Minus, |y, l| (2.0 - y) * (1.0 - l * l));
        let k = coefficients(&p, &m, 1.3, 0.7, 1e-8).unwrap();
        let scaled = |g: &DensityGrid| DensityGrid { values: &g.values * 3.0, ..g.clone() };
        let k3 = coefficients(&scaled(&p), &scaled(&m), 1.3, 0.7, 1e-8).unwrap();
        for i in 0..k.c.len() {
            assert!((k3.c[i] - 3.0 * k.c[i]).abs() < 1e-13);
            assert!((k3.d_plus[i] - 3.0 * k.d_plus[i]).abs() < 1e-13);
            assert!((k3.d_minus[i] - 3.0 * k.d_minus[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn bounds_bracket_the_constant_example() {
        let b = DensityDataBounds { alpha0: 1.0, beta0: 1.0, l_lower: 1.0, l_upper: 1.0, lipschitz: 0.0 };
        let (lo, hi) = ellipticity_bounds(&b, 1.0, 1.0);
        // direct evaluation at the extreme moments
        let m1: (f64, f64) = (1.0 / 16.0, 1.0);
        let m3 = (1.0 / 128.0, 0.5);
        let d_min = m1.0 * m3.0 / (m1.0 + m1.1);
        let d_max = m1.1 * m3.1 / (m1.1 + m1.0);
        assert!((lo - d_min.min(m1.0 / 2.0)).abs() < 1e-15);
        assert!((hi - d_max.max(m1.1 / 2.0)).abs() < 1e-15);
        assert!(lo < hi);
        for v in [0.125, 0.25] {
            assert!(lo <= v && v <= hi);
        }
    }

    #[test]
    fn larger_beta_raises_upper_bound() {
        let b = DensityDataBounds { alpha0: 0.5, beta0: 1.0, l_lower: 0.4, l_upper: 1.0, lipschitz: 1.0 };
        let (lo1, hi1) = ellipticity_bounds(&b, 1.0, 1.0);
        let (lo2, hi2) = ellipticity_bounds(&DensityDataBounds { beta0: 2.0, ..b }, 1.0, 1.0);
        assert!(hi2 > hi1);
        // the lower D bound has the opposite family's largest μ1 in its denominator
        assert!(lo2 <= lo1);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = DensityGrid::from_fn(8, 8, 1.0, Family::Plus, |y, l| y + l);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 10);
        assert!(lines[0].starts_with("y\\l,0,0.125"));
        assert!(lines[9].starts_with("1,"));
    }
}
