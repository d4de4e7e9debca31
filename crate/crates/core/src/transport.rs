//! Semi-Lagrangian step for the rescaled transport equation
//!
//! ```text
//! ∂t ρ + a ∂y ρ − s_l ∂l ρ = −ρ ∂y V / X,     a = (V − Ẋ y) / X,
//! ```
//!
//! with inflow data at `y = 0` (plus family) or `y = 1` (minus family).

use ndarray::Array2;
use serde::Serialize;

use crate::density::{DensityGrid, Family};
use crate::functions::DensityDatum;
use crate::velocity::VelocityProfile;

/// Courant number above which [`advance`] reports a warning.
pub const CFL_WARN: f64 = 2.0;

/// Per-`y` characteristic speed `a` and stretching rate `∂y V / X` of one family.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportField {
    pub family: Family,
    pub speed: Vec<f64>,
    pub rate: Vec<f64>,
}

/// `a± = (V± − Ẋ y) / X` on the profile's nodes.
pub fn y_speed(profile: &VelocityProfile, x: f64, xdot: f64, family: Family) -> Vec<f64> {
    let v = match family {
        Family::Plus => &profile.v_plus,
        Family::Minus => &profile.v_minus,
    };
    let n = v.len() - 1;
    v.iter().enumerate().map(|(i, vi)| (vi - xdot * i as f64 / n as f64) / x).collect()
}

impl TransportField {
    pub fn new(profile: &VelocityProfile, x: f64, xdot: f64, family: Family) -> Self {
        let dv = match family {
            Family::Plus => &profile.dv_plus,
            Family::Minus => &profile.dv_minus,
        };
        Self { family, speed: y_speed(profile, x, xdot, family), rate: dv.iter().map(|d| d / x).collect() }
    }

    /// Arithmetic mean of two fields on the same nodes.
    pub fn average(&self, other: &TransportField) -> TransportField {
        let mean = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
        TransportField { family: self.family, speed: mean(&self.speed, &other.speed), rate: mean(&self.rate, &other.rate) }
    }

    pub fn max_speed(&self) -> f64 {
        self.speed.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    fn n(&self) -> usize {
        self.speed.len() - 1
    }
}

/// Linear interpolation of nodal values on the uniform grid of `[0, 1]`,
/// clamped to the end values outside it.
fn interp_nodal(values: &[f64], y: f64) -> f64 {
    let n = values.len() - 1;
    let s = (y.clamp(0.0, 1.0) * n as f64).min(n as f64);
    let i = (s.floor() as usize).min(n - 1);
    let w = s - i as f64;
    (1.0 - w) * values[i] + w * values[i + 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    None,
    Left,
    Right,
}

/// Departure point of the characteristic arriving at a grid node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicFoot {
    /// May lie outside `[0, 1]`.
    pub y_star: f64,
    pub l_star: f64,
    /// Midpoint of the backtrace in `y`.
    pub y_mid: f64,
    pub crossed: Crossing,
    /// Time at which the characteristic crossed `y = 0` or `y = 1`.
    pub crossing_time: Option<f64>,
    /// Fraction of the step spent inside the domain, measured back from arrival.
    pub inside_fraction: f64,
}

/// Traces the characteristic arriving at `(y, l)` at time `t_new` back over
/// `dt`, with one midpoint correction of the speed.
pub fn backtrace(field: &TransportField, y: f64, l: f64, t_new: f64, dt: f64, s_l: f64) -> CharacteristicFoot {
    let a0 = interp_nodal(&field.speed, y);
    let y_mid = y - 0.5 * dt * a0;
    let y_star = y - dt * interp_nodal(&field.speed, y_mid);
    let l_star = l + s_l * dt;
    let boundary = if y_star < 0.0 {
        Some((Crossing::Left, y / (y - y_star)))
    } else if y_star > 1.0 {
        Some((Crossing::Right, (1.0 - y) / (y_star - y)))
    } else {
        None
    };
    match boundary {
        Some((crossed, theta)) => CharacteristicFoot {
            y_star,
            l_star,
            y_mid,
            crossed,
            crossing_time: Some(t_new - theta * dt),
            inside_fraction: theta,
        },
        None => CharacteristicFoot { y_star, l_star, y_mid, crossed: Crossing::None, crossing_time: None, inside_fraction: 1.0 },
    }
}

/// Courant number that exceeded [`CFL_WARN`]; accuracy, not stability, degrades.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CflWarning {
    pub family: Family,
    pub courant: f64,
}

/// Inputs of one transport step other than the density itself.
#[derive(Debug, Clone, Copy)]
pub struct TransportStep<'a> {
    pub field: &'a TransportField,
    /// Start of the step.
    pub t: f64,
    pub dt: f64,
    pub s_l: f64,
    /// Inflow density as a function of `(t, l)`.
    pub inflow: &'a DensityDatum,
    /// Evaluate the stretching rate at the backtrace midpoint instead of the arrival node.
    pub midpoint_source: bool,
}

/// Interpolation stencil `(index, weight)` on a uniform grid of `n` cells
/// of width `h`, clamped to the last cell.
fn stencil(x: f64, h: f64, n: usize) -> (usize, f64) {
    // x >= 0 here, so truncation is floor
    let s = (x / h).clamp(0.0, n as f64);
    let i = (s as usize).min(n - 1);
    (i, s - i as f64)
}

/// Advances one family's density from `t` to `t + dt`.
///
/// The `y` speed does not depend on `l` and the `l` drift does not depend on
/// `y`, so each row shares one backtrace and each column one `l` stencil.
pub fn advance(grid: &DensityGrid, step: &TransportStep<'_>) -> (DensityGrid, Option<CflWarning>) {
    let field = step.field;
    assert_eq!(field.n(), grid.n_y(), "transport field and density grid disagree on n_y");
    let (ny, nl) = (grid.n_y(), grid.n_l());
    let (dy, dl) = (grid.dy(), grid.dl());
    let l_max = grid.l_max;
    let t_new = step.t + step.dt;
    let old = grid.values.as_standard_layout();
    let old = old.as_slice().expect("standard layout");
    let width = nl + 1;

    let inflow_side = match grid.family {
        Family::Plus => Crossing::Left,
        Family::Minus => Crossing::Right,
    };

    // column k samples between l nodes kl and kl + 1, or is beyond the support
    let l_shift = step.s_l * step.dt;
    let columns: Vec<Option<(usize, f64)>> = (0..=nl)
        .map(|k| {
            let l_star = k as f64 * dl + l_shift;
            (l_star < l_max).then(|| stencil(l_star, dl, nl))
        })
        .collect();

    let mut values = Array2::zeros((ny + 1, nl + 1));
    for (i, mut row) in values.rows_mut().into_iter().enumerate() {
        let y = i as f64 * dy;
        let foot = backtrace(field, y, 0.0, t_new, step.dt, step.s_l);
        let rate = if step.midpoint_source { interp_nodal(&field.rate, foot.y_mid) } else { field.rate[i] };
        match foot.crossing_time {
            Some(t_c) if foot.crossed == inflow_side => {
                let theta = foot.inside_fraction;
                let decay = (-theta * step.dt * rate).exp();
                let l_drift = step.s_l * theta * step.dt;
                for (k, v) in row.iter_mut().enumerate() {
                    let l_c = k as f64 * dl + l_drift;
                    *v = if l_c >= l_max { 0.0 } else { (step.inflow.eval(t_c, l_c) * decay).max(0.0) };
                }
            }
            // interior, or clamped onto the outflow edge
            _ => {
                let decay = (-step.dt * rate).exp();
                let (iy, wy) = stencil(foot.y_star.clamp(0.0, 1.0), dy, ny);
                let lo = &old[iy * width..(iy + 1) * width];
                let hi = &old[(iy + 1) * width..(iy + 2) * width];
                for (v, col) in row.iter_mut().zip(&columns) {
                    if let Some((k, wl)) = *col {
                        let a = (1.0 - wl) * lo[k] + wl * lo[k + 1];
                        let b = (1.0 - wl) * hi[k] + wl * hi[k + 1];
                        *v = (((1.0 - wy) * a + wy * b) * decay).max(0.0);
                    }
                }
            }
        }
    }

    let courant = step.dt * field.max_speed() / dy;
    let warning = (courant > CFL_WARN).then_some(CflWarning { family: grid.family, courant });
    (DensityGrid { values, l_max, family: grid.family }, warning)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::LengthProfile;

    fn constant_field(family: Family, n: usize, speed: f64) -> TransportField {
        TransportField { family, speed: vec![speed; n + 1], rate: vec![0.0; n + 1] }
    }

    fn zero_datum() -> DensityDatum {
        DensityDatum::new(LengthProfile::Table { points: vec![] })
    }

    #[test]
    fn zero_stays_zero() {
        let g = DensityGrid::zeros(16, 16, 1.0, Family::Plus);
        let field = constant_field(Family::Plus, 16, 0.37);
        let datum = zero_datum();
        let step = TransportStep { field: &field, t: 0.0, dt: 0.03, s_l: 0.1, inflow: &datum, midpoint_source: false };
        let (out, warn) = advance(&g, &step);
        assert!(warn.is_none());
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aligned_step_is_an_exact_shift() {
        let n = 32;
        let f = |y: f64, l: f64| (1.0 + (3.0 * y).sin().powi(2)) * (1.0 - l).max(0.0).powi(2);
        let g = DensityGrid::from_fn(n, n, 1.0, Family::Plus, f);
        // one y cell and two l cells per step
        let dt = 0.25;
        let speed = 1.0 / (n as f64 * dt);
        let s_l = 2.0 / (n as f64 * dt);
        let field = constant_field(Family::Plus, n, speed);
        let datum = zero_datum();
        let step = TransportStep { field: &field, t: 0.0, dt, s_l, inflow: &datum, midpoint_source: false };
        let (out, _) = advance(&g, &step);
        for i in 1..=n {
            for k in 0..=n - 2 {
                let expect = g.values[[i - 1, k + 2]];
                assert!((out.values[[i, k]] - expect).abs() < 1e-12, "({i},{k})");
            }
            assert_eq!(out.values[[i, n]], 0.0);
        }
        // inflow row takes the (zero) datum
        assert!(out.values.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn minus_family_takes_inflow_from_the_right() {
        let n = 16;
        let g = DensityGrid::zeros(n, n, 1.0, Family::Minus);
        let field = constant_field(Family::Minus, n, -0.5);
        let datum = DensityDatum::new(LengthProfile::Plateau { value: 2.0, l_flat: 0.5, l_max: 1.0 });
        let step = TransportStep { field: &field, t: 0.0, dt: 0.1, s_l: 0.0, inflow: &datum, midpoint_source: false };
        let (out, _) = advance(&g, &step);
        // characteristics from y ≥ 1 − 0.05 start at the boundary
        assert!((out.values[[n, 0]] - 2.0).abs() < 1e-14);
        assert_eq!(out.values[[0, 0]], 0.0);
    }

    #[test]
    fn stretching_factor_decays_the_density() {
        let n = 8;
        let g = DensityGrid::from_fn(n, n, 1.0, Family::Plus, |_, _| 1.0);
        let field = TransportField { family: Family::Plus, speed: vec![0.0; n + 1], rate: vec![0.5; n + 1] };
        let datum = zero_datum();
        let step = TransportStep { field: &field, t: 0.0, dt: 0.2, s_l: 0.0, inflow: &datum, midpoint_source: false };
        let (out, _) = advance(&g, &step);
        assert!((out.values[[3, 3]] - (-0.1_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn mass_balance_matches_boundary_fluxes() {
        // d/dt ∫∫ρ = a (∫ρ(0,l) − ∫ρ(1,l)) dl − s_l ∫ρ(y,0) dy for constant a
        let n = 128;
        let (a, s_l, dt) = (0.3, 0.1, 1e-3);
        let shape = LengthProfile::CosineTaper { value: 1.0, l_flat: 0.3, l_max: 0.9 };
        let datum = DensityDatum::new(shape.clone());
        let g = DensityGrid::from_fn(n, n, 1.0, Family::Plus, |y, l| (1.0 - 0.5 * y) * shape.eval(l));
        let field = constant_field(Family::Plus, n, a);
        let step = TransportStep { field: &field, t: 0.0, dt, s_l, inflow: &datum, midpoint_source: false };
        let (out, _) = advance(&g, &step);
        let change = (out.total_mass() - g.total_mass()) / dt;
        let w = crate::density::trapezoid_weights(n, 1.0 / n as f64);
        let edge = |row: usize| -> f64 { (0..=n).map(|k| w[k] * g.values[[row, k]]).sum() };
        let l0: f64 = (0..=n).map(|i| w[i] * g.values[[i, 0]]).sum();
        let expected = a * (edge(0) - edge(n)) - s_l * l0;
        assert!((change - expected).abs() < 0.02 * expected.abs(), "{change} vs {expected}");
    }

    #[test]
    fn large_steps_warn_but_stay_positive() {
        let n = 16;
        let g = DensityGrid::from_fn(n, n, 1.0, Family::Plus, |y, l| (y * 7.0).sin().abs() * (1.0 - l));
        let field = constant_field(Family::Plus, n, 1.0);
        let datum = DensityDatum::new(LengthProfile::Plateau { value: 1.0, l_flat: 0.2, l_max: 1.0 });
        let step = TransportStep { field: &field, t: 0.0, dt: 0.5, s_l: 0.1, inflow: &datum, midpoint_source: true };
        let (out, warn) = advance(&g, &step);
        assert!(warn.unwrap().courant > CFL_WARN);
        assert!(out.min_value() >= 0.0);
    }
}
