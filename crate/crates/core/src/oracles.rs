//! Closed-form reference solutions.
//!
//! Without end force the velocities are constant in space, the length follows
//! from one quadrature, and the densities are transported along straight
//! characteristics. For small constant forces the length relaxes to
//! `X∞ = F / (C (η − u_l − u_r))` with `C` built from the inflow densities.

use serde::Serialize;
use thiserror::Error;

use crate::config::{BoundaryData, InitialData, SimulationConfig};
use crate::density::Family;
use crate::functions::{DensityDatum, LengthProfile};

/// Absolute tolerance of the age bisection.
pub const AGE_TOL: f64 = 1e-12;

/// `(V̄⁺, V̄⁻) = (u₀⁺(t), u₀⁺(t) − η)`.
pub fn explicit_velocity(t: f64, boundary: &BoundaryData, eta: f64) -> (f64, f64) {
    let u = boundary.u0_plus.eval(t);
    (u, u - eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthOracle {
    pub x: f64,
    /// First time in `[0, t]` at which the length reaches zero.
    pub zero_crossing: Option<f64>,
}

/// `X̄(t) = X0 + ∫₀ᵗ (u₀⁺ + u₁⁻ − η) ds`.
pub fn explicit_length(t: f64, boundary: &BoundaryData, eta: f64, x0: f64) -> LengthOracle {
    let x_at = |s: f64| x0 + boundary.u0_plus.integral(0.0, s) + boundary.u1_minus.integral(0.0, s) - eta * s;
    let x = x_at(t);
    // scan for the first sign change, then bisect
    let samples = 4096;
    let mut zero_crossing = None;
    if x0 <= 0.0 {
        zero_crossing = Some(0.0);
    } else if t > 0.0 {
        let mut prev = 0.0;
        for k in 1..=samples {
            let s = t * k as f64 / samples as f64;
            if x_at(s) <= 0.0 {
                let (mut lo, mut hi) = (prev, s);
                while hi - lo > 1e-15 * t.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if x_at(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                zero_crossing = Some(hi);
                break;
            }
            prev = s;
        }
    }
    LengthOracle { x, zero_crossing }
}

/// Age of the filament found at `y` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Age {
    /// Entered through its inflow end `τ` time units ago.
    Boundary(f64),
    /// Present since `t = 0`.
    InitialRegion,
}

/// Force-free solution for one configuration's data.
#[derive(Debug, Clone, Copy)]
pub struct ExplicitSolution<'a> {
    pub boundary: &'a BoundaryData,
    pub initial: &'a InitialData,
    pub eta: f64,
    pub s_l: f64,
    pub x0: f64,
    pub l_upper: f64,
}

impl<'a> ExplicitSolution<'a> {
    pub fn new(config: &'a SimulationConfig) -> Self {
        ExplicitSolution {
            boundary: &config.boundary,
            initial: &config.initial,
            eta: config.params.eta,
            s_l: config.params.s_l,
            x0: config.params.x0,
            l_upper: config.bounds.l_upper,
        }
    }

    pub fn v_plus(&self, t: f64) -> f64 {
        explicit_velocity(t, self.boundary, self.eta).0
    }

    pub fn v_minus(&self, t: f64) -> f64 {
        explicit_velocity(t, self.boundary, self.eta).1
    }

    pub fn x_bar(&self, t: f64) -> f64 {
        explicit_length(t, self.boundary, self.eta, self.x0).x
    }

    fn inflow_speed(&self, family: Family) -> &crate::functions::ScalarFn {
        match family {
            Family::Plus => &self.boundary.u0_plus,
            Family::Minus => &self.boundary.u1_minus,
        }
    }

    /// Solves `X̄(t) d = ∫_{t−τ}^{t} u ds` for `τ`, where `d` is the distance
    /// to the family's inflow end (`y` or `1 − y`).
    pub fn age(&self, y: f64, t: f64, family: Family) -> Age {
        let u = self.inflow_speed(family);
        let d = match family {
            Family::Plus => y,
            Family::Minus => 1.0 - y,
        };
        let target = self.x_bar(t) * d;
        if target <= 0.0 {
            return Age::Boundary(0.0);
        }
        if !(target < u.integral(0.0, t)) {
            return Age::InitialRegion;
        }
        let (mut lo, mut hi) = (0.0, t);
        while hi - lo > AGE_TOL {
            let mid = 0.5 * (lo + hi);
            if u.integral(t - mid, t) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Age::Boundary(0.5 * (lo + hi))
    }

    /// Initial position (rescaled by `X0`) of the filament found at `y` at time `t`.
    pub fn initial_position(&self, y: f64, t: f64, family: Family) -> f64 {
        let x_bar = self.x_bar(t);
        match family {
            Family::Plus => (x_bar * y - self.boundary.u0_plus.integral(0.0, t)) / self.x0,
            Family::Minus => x_bar / self.x0 * (y - 1.0) + 1.0 + self.boundary.u1_minus.integral(0.0, t) / self.x0,
        }
    }

    pub fn density(&self, t: f64, y: f64, l: f64, family: Family) -> f64 {
        let (inflow, initial) = match family {
            Family::Plus => (&self.boundary.rho0_plus, &self.initial.rho_plus),
            Family::Minus => (&self.boundary.rho1_minus, &self.initial.rho_minus),
        };
        match self.age(y, t, family) {
            Age::Boundary(tau) => {
                let l0 = l + self.s_l * tau;
                if l0 >= self.l_upper {
                    0.0
                } else {
                    inflow.eval(t - tau, l0)
                }
            }
            Age::InitialRegion => {
                let l0 = l + self.s_l * t;
                if l0 >= self.l_upper {
                    0.0
                } else {
                    initial.eval(self.initial_position(y, t, family), l0)
                }
            }
        }
    }
}

/// Convenience wrapper around [`ExplicitSolution::age`].
pub fn filament_age(y: f64, t: f64, family: Family, config: &SimulationConfig) -> Age {
    ExplicitSolution::new(config).age(y, t, family)
}

/// Convenience wrapper around [`ExplicitSolution::density`].
pub fn explicit_density(t: f64, y: f64, l: f64, family: Family, config: &SimulationConfig) -> f64 {
    ExplicitSolution::new(config).density(t, y, l, family)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("force-free bundle is not contractive: eta = {eta} <= u_l + u_r = {sum}")]
    ContractivityViolated { eta: f64, sum: f64 },
    #[error("steady state needs a pulling force (F >= 0), got {force}")]
    NonPullingForce { force: f64 },
    #[error("limiting densities must be stationary and have positive first moments")]
    InvalidLimitDensity,
}

/// Constant coefficients produced by stationary inflow densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitCoefficients {
    pub c: f64,
    pub d_plus: f64,
    pub d_minus: f64,
}

impl LimitCoefficients {
    /// Length on which the velocity profile varies: `sqrt(max(D±) / C)`.
    pub fn elliptic_length(&self) -> f64 {
        (self.d_plus.max(self.d_minus) / self.c).sqrt()
    }
}

/// Friction coefficients of the spatially constant state `ρ⁺ = ρ_l(l)`, `ρ⁻ = ρ_r(l)`.
pub fn limit_coefficients(
    rho_l: &LengthProfile,
    rho_r: &LengthProfile,
    c0: f64,
    d0: f64,
) -> Result<LimitCoefficients, OracleError> {
    let (m1p, m1m) = (rho_l.moment(1), rho_r.moment(1));
    if !(m1p > 0.0 && m1m > 0.0) {
        return Err(OracleError::InvalidLimitDensity);
    }
    let total = m1p + m1m;
    Ok(LimitCoefficients {
        c: c0 * m1p * m1m / total,
        d_plus: d0 * m1p * rho_l.moment(3) / total,
        d_minus: d0 * m1m * rho_r.moment(3) / total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    pub force: f64,
    pub c_limit: f64,
    pub eta: f64,
    pub u_l: f64,
    pub u_r: f64,
    pub x_inf: f64,
}

impl SteadyState {
    /// `Ẋ = u_l + u_r − η + F / (C X)`.
    pub fn limit_rate(&self, x: f64) -> f64 {
        self.u_l + self.u_r - self.eta + self.force / (self.c_limit * x)
    }

    /// Classical RK4 for the limit equation, sampled at `t = k dt` up to `t_end`.
    pub fn limit_trajectory(&self, x0: f64, t_end: f64, dt: f64) -> Vec<(f64, f64)> {
        let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
        let mut out = Vec::with_capacity(steps + 1);
        let (mut t, mut x) = (0.0, x0);
        out.push((t, x));
        for k in 1..=steps {
            let t_next = (k as f64 * dt).min(t_end);
            let h = t_next - t;
            let k1 = self.limit_rate(x);
            let k2 = self.limit_rate(x + 0.5 * h * k1);
            let k3 = self.limit_rate(x + 0.5 * h * k2);
            let k4 = self.limit_rate(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t = t_next;
            out.push((t, x));
        }
        out
    }
}

/// `X∞ = F / (C (η − u_l − u_r))` for a given limiting coefficient.
pub fn steady_length(force: f64, c_limit: f64, eta: f64, u_l: f64, u_r: f64) -> Result<SteadyState, OracleError> {
    let net = eta - u_l - u_r;
    if !(net > 0.0) {
        return Err(OracleError::ContractivityViolated { eta, sum: u_l + u_r });
    }
    if !(force >= 0.0) {
        return Err(OracleError::NonPullingForce { force });
    }
    Ok(SteadyState { force, c_limit, eta, u_l, u_r, x_inf: force / (c_limit * net) })
}

/// Steady length from the limiting inflow densities.
pub fn asymptotic_steady_length(
    force: f64,
    c0: f64,
    eta: f64,
    u_l: f64,
    u_r: f64,
    rho_l: &DensityDatum,
    rho_r: &DensityDatum,
) -> Result<SteadyState, OracleError> {
    if !rho_l.is_stationary() || !rho_r.is_stationary() {
        return Err(OracleError::InvalidLimitDensity);
    }
    let k = limit_coefficients(&rho_l.shape, &rho_r.shape, c0, 1.0)?;
    steady_length(force, k.c, eta, u_l, u_r)
}
